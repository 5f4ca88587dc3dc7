#include "qcbm/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>

#include "qcbm/error.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

namespace {

enum Stream : std::uint64_t { kModelStream = 1, kPlusStream = 2, kMinusStream = 3 };

WeightedOutcomes measure(const CircuitSpec& spec, const ParamVector& params, const GradOptions& opts,
                         std::uint64_t stream, std::uint64_t index, std::size_t& batches) {
    if (opts.mode == Expectation::Exact) return WeightedOutcomes::from_distribution(exact_distribution(spec, params));
    ++batches;
    return WeightedOutcomes::from_batch(generate(spec, params, opts.batch_m, derive_seed(opts.seed, {stream, index})));
}

double cross_expectation(const OutcomeKernel& k, const WeightedOutcomes& a, const WeightedOutcomes& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) row += b.weights[j] * k(a.outcomes[i], b.outcomes[j]);
        s += a.weights[i] * row;
    }
    return s;
}

// Evaluates a per-outcome function of the frozen net once per distinct outcome.
class FeatureLookup {
public:
    FeatureLookup(MlpNet& net, bool use_features, std::initializer_list<const std::vector<WeightedOutcomes>*> groups,
                  std::initializer_list<const WeightedOutcomes*> singles) {
        std::vector<std::uint32_t> unique;
        int n_bits = 0;
        auto add = [&](const WeightedOutcomes& w) {
            n_bits = w.n_bits;
            for (auto x : w.outcomes) {
                if (index_.emplace(x, static_cast<Eigen::Index>(unique.size())).second) unique.push_back(x);
            }
        };
        for (const auto* g : groups) {
            for (const auto& w : *g) add(w);
        }
        for (const auto* w : singles) add(*w);
        const Eigen::MatrixXd input = bits_matrix(unique, n_bits);
        values_ = use_features ? net.features(input) : net.forward(input);
    }

    [[nodiscard]] auto row(std::uint32_t x) const { return values_.row(index_.at(x)); }
    [[nodiscard]] Eigen::Index dim() const { return values_.cols(); }

    // sum_i w_i f(x_i) f(x_i)^T
    [[nodiscard]] Eigen::MatrixXd second_moment(const WeightedOutcomes& w) const {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim(), dim());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const Eigen::RowVectorXd f = row(w.outcomes[i]);
            s.noalias() += w.weights[i] * f.transpose() * f;
        }
        return s;
    }

private:
    std::unordered_map<std::uint32_t, Eigen::Index> index_;
    Eigen::MatrixXd values_;
};

void require_uncentered(const Mcr2Config& cfg) {
    cfg.validate();
    if (!cfg.assume_centered) {
        throw ConfigError("MCR2 circuit gradients are defined for uncentered second moments (assume_centered = true)");
    }
}

// Quadratic form x -> K(x,x) - c k_x^T S (I + c S K_TT S)^{-1} S k_x, which
// equals phi(x)^T (I + c sum_t w_t phi_t phi_t^T)^{-1} phi(x) by Woodbury.
class WoodburyForm {
public:
    WoodburyForm(const OutcomeKernel& k, std::vector<std::uint32_t> pool, const std::vector<double>& weights, double c)
        : kernel_(k), pool_(std::move(pool)), c_(c) {
        const auto n = static_cast<Eigen::Index>(pool_.size());
        sqrt_w_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) sqrt_w_(i) = std::sqrt(weights[static_cast<std::size_t>(i)]);
        Eigen::MatrixXd gram(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                gram(i, j) = gram(j, i) = kernel_(pool_[static_cast<std::size_t>(i)], pool_[static_cast<std::size_t>(j)]);
            }
        }
        Eigen::MatrixXd inner = c_ * (sqrt_w_.asDiagonal() * gram * sqrt_w_.asDiagonal());
        inner.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(inner);
        if (llt.info() != Eigen::Success) {
            inner.diagonal().array() += 1e-12;
            llt.compute(inner);
        }
        if (llt.info() != Eigen::Success) throw NumericError("kernel MCR2: Gram system is not positive definite");
        llt_ = std::move(llt);
    }

    // Excludes the K(x, x) term, returned separately by self().
    [[nodiscard]] double correction(std::uint32_t x) const {
        Eigen::VectorXd kx(static_cast<Eigen::Index>(pool_.size()));
        for (Eigen::Index i = 0; i < kx.size(); ++i) kx(i) = kernel_(pool_[static_cast<std::size_t>(i)], x) * sqrt_w_(i);
        return c_ * kx.dot(llt_.solve(kx));
    }

private:
    const OutcomeKernel& kernel_;
    std::vector<std::uint32_t> pool_;
    double c_;
    Eigen::VectorXd sqrt_w_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

GradEstimate finish(std::vector<double> grad, const ShiftedSamples& s) {
    for (double g : grad) {
        if (!std::isfinite(g)) throw NumericError("gradient estimate is not finite");
    }
    return {std::move(grad), s.batches_used};
}

}  // namespace

void GradOptions::validate() const {
    if (batch_m < 1) throw ConfigError("batch_m must be >= 1, got " + std::to_string(batch_m));
}

ShiftedSamples draw_shifted(const CircuitSpec& spec, const ParamVector& params, const GradOptions& opts) {
    opts.validate();
    const std::size_t p = spec.num_params();
    if (params.size() != p) throw ShapeError("parameter count does not match circuit");
    ShiftedSamples s;
    s.plus.reserve(p);
    s.minus.reserve(p);
    if (opts.fresh_model_batch && opts.mode == Expectation::Sampled) {
        for (std::size_t k = 0; k < p; ++k) s.model.push_back(measure(spec, params, opts, kModelStream, k, s.batches_used));
    } else {
        s.model.push_back(measure(spec, params, opts, kModelStream, 0, s.batches_used));
    }
    for (std::size_t k = 0; k < p; ++k) {
        s.plus.push_back(measure(spec, shifted_params(params, k, Shift::Plus), opts, kPlusStream, k, s.batches_used));
        s.minus.push_back(measure(spec, shifted_params(params, k, Shift::Minus), opts, kMinusStream, k, s.batches_used));
    }
    return s;
}

GradEstimate grad_mmd(const CircuitSpec& spec, const ParamVector& params, const RbfKernel& k,
                      const WeightedOutcomes& real, const GradOptions& opts) {
    if (real.n_bits != spec.n_qubits) throw ShapeError("real samples and circuit differ in width");
    return grad_mmd(draw_shifted(spec, params, opts), bit_rbf_kernel(k, spec.n_qubits), real);
}

GradEstimate grad_mmd(const ShiftedSamples& s, const OutcomeKernel& k, const WeightedOutcomes& real) {
    std::vector<double> grad(s.num_params());
    for (std::size_t p = 0; p < grad.size(); ++p) {
        const auto& model = s.model_for(p);
        grad[p] = cross_expectation(k, s.plus[p], model) - cross_expectation(k, s.minus[p], model) -
                  cross_expectation(k, s.plus[p], real) + cross_expectation(k, s.minus[p], real);
    }
    return finish(std::move(grad), s);
}

GradEstimate grad_gan_ns(const CircuitSpec& spec, const ParamVector& params, MlpNet& net, const GradOptions& opts) {
    return grad_gan_ns(draw_shifted(spec, params, opts), net);
}

GradEstimate grad_gan_ns(const ShiftedSamples& s, MlpNet& net) {
    if (net.head() != Head::Scorer) throw ConfigError("GAN gradient needs a scorer network");
    const FeatureLookup scores(net, false, {&s.plus, &s.minus}, {});
    auto mean_log_d = [&](const WeightedOutcomes& w) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w.weights[i] * std::log(std::clamp(scores.row(w.outcomes[i])(0), kScoreClamp, 1.0 - kScoreClamp));
        }
        return acc;
    };
    std::vector<double> grad(s.num_params());
    for (std::size_t p = 0; p < grad.size(); ++p) grad[p] = 0.5 * mean_log_d(s.minus[p]) - 0.5 * mean_log_d(s.plus[p]);
    return finish(std::move(grad), s);
}

GradEstimate grad_mcr2_explicit(const CircuitSpec& spec, const ParamVector& params, MlpNet& net,
                                const WeightedOutcomes& real, const Mcr2Config& cfg, const GradOptions& opts) {
    return grad_mcr2_explicit(draw_shifted(spec, params, opts), net, real, cfg);
}

GradEstimate grad_mcr2_explicit(const ShiftedSamples& s, MlpNet& net, const WeightedOutcomes& real, const Mcr2Config& cfg) {
    require_uncentered(cfg);
    const FeatureLookup phi(net, true, {&s.plus, &s.minus, &s.model}, {&real});
    const auto d = static_cast<double>(phi.dim());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(phi.dim(), phi.dim());
    const Eigen::MatrixXd real_moment = phi.second_moment(real);
    // d(Delta R)/d theta = d/(8 eps^2) * <(I + C_XY)^{-1} - (I + C_X)^{-1}, E_+ phi phi^T - E_- phi phi^T>
    const double scale = d / (8.0 * cfg.eps_sq);

    std::vector<double> grad(s.num_params());
    Eigen::MatrixXd diff_inv;
    const WeightedOutcomes* last_model = nullptr;
    for (std::size_t p = 0; p < grad.size(); ++p) {
        if (&s.model_for(p) != last_model) {
            last_model = &s.model_for(p);
            const Eigen::MatrixXd model_moment = phi.second_moment(*last_model);
            const Eigen::MatrixXd joint = id + d / (2.0 * cfg.eps_sq) * (model_moment + real_moment);
            const Eigen::MatrixXd own = id + d / cfg.eps_sq * model_moment;
            diff_inv = joint.llt().solve(id) - own.llt().solve(id);
        }
        const Eigen::MatrixXd delta = phi.second_moment(s.plus[p]) - phi.second_moment(s.minus[p]);
        grad[p] = scale * (diff_inv.array() * delta.array()).sum();
    }
    return finish(std::move(grad), s);
}

GradEstimate grad_mcr2_kernel(const CircuitSpec& spec, const ParamVector& params, const OutcomeKernel& kernel,
                              int feature_dim, const WeightedOutcomes& real, const Mcr2Config& cfg,
                              const GradOptions& opts) {
    return grad_mcr2_kernel(draw_shifted(spec, params, opts), kernel, feature_dim, real, cfg);
}

GradEstimate grad_mcr2_kernel(const ShiftedSamples& s, const OutcomeKernel& kernel, int feature_dim,
                              const WeightedOutcomes& real, const Mcr2Config& cfg) {
    require_uncentered(cfg);
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    const auto d = static_cast<double>(feature_dim);
    const double c_joint = d / (2.0 * cfg.eps_sq);
    const double c_own = d / cfg.eps_sq;
    const double scale = d / (8.0 * cfg.eps_sq);

    std::vector<double> grad(s.num_params());
    std::unique_ptr<WoodburyForm> joint;
    std::unique_ptr<WoodburyForm> own;
    const WeightedOutcomes* last_model = nullptr;
    for (std::size_t p = 0; p < grad.size(); ++p) {
        const WeightedOutcomes& model = s.model_for(p);
        if (&model != last_model) {
            last_model = &model;
            std::vector<std::uint32_t> pool = model.outcomes;
            pool.insert(pool.end(), real.outcomes.begin(), real.outcomes.end());
            std::vector<double> weights = model.weights;
            weights.insert(weights.end(), real.weights.begin(), real.weights.end());
            joint = std::make_unique<WoodburyForm>(kernel, std::move(pool), weights, c_joint);
            own = std::make_unique<WoodburyForm>(kernel, model.outcomes, model.weights, c_own);
        }
        // Each quadratic form is K(x,x) - correction(x). The K(x,x) parts of the
        // joint and own terms cancel in the difference for any kernel.
        double forms = 0.0;
        auto accumulate = [&](const WeightedOutcomes& w, double sign) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                forms += sign * w.weights[i] * (own->correction(w.outcomes[i]) - joint->correction(w.outcomes[i]));
            }
        };
        accumulate(s.plus[p], 1.0);
        accumulate(s.minus[p], -1.0);
        grad[p] = scale * forms;
    }
    return finish(std::move(grad), s);
}

GradEstimate grad_deep_mmd(const CircuitSpec& spec, const ParamVector& params, MlpNet& net, const RbfKernel& k,
                           const WeightedOutcomes& real, const GradOptions& opts) {
    return grad_deep_mmd(draw_shifted(spec, params, opts), net, k, real);
}

GradEstimate grad_deep_mmd(const ShiftedSamples& s, MlpNet& net, const RbfKernel& k, const WeightedOutcomes& real) {
    if (net.head() != Head::FeatureMapper) throw ConfigError("deep MMD gradient needs a feature-mapper network");
    return grad_mmd(s, feature_rbf_kernel(net, k, real.n_bits), real);
}

namespace {

std::shared_ptr<const Eigen::MatrixXd> all_outcome_features(MlpNet& net, int n_bits, bool use_features) {
    std::vector<std::uint32_t> all(std::size_t{1} << n_bits);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
    const Eigen::MatrixXd input = bits_matrix(all, n_bits);
    return std::make_shared<const Eigen::MatrixXd>(use_features ? net.features(input) : net.forward(input));
}

}  // namespace

OutcomeKernel feature_rbf_kernel(MlpNet& net, const RbfKernel& k, int n_bits) {
    auto table = all_outcome_features(net, n_bits, false);
    return [table, k](std::uint32_t x, std::uint32_t y) {
        return k.from_sq_dist((table->row(x) - table->row(y)).squaredNorm());
    };
}

OutcomeKernel feature_linear_kernel(MlpNet& net, int n_bits) {
    auto table = all_outcome_features(net, n_bits, true);
    return [table](std::uint32_t x, std::uint32_t y) { return table->row(x).dot(table->row(y)); };
}

}  // namespace qcbm
