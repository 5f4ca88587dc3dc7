#include "qcbm/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "qcbm/error.hpp"
#include "qcbm/gradients.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

namespace {

// Seed streams under the run's root seed.
enum : std::uint64_t { kInitStream = 1, kNetStream = 2, kRealStream = 3, kDiscStream = 4, kShiftStream = 5 };

constexpr struct {
    Scheme scheme;
    const char* name;
} kSchemeNames[] = {
    {Scheme::MmdRbf, "MMD_RBF"}, {Scheme::GanNs, "GAN_NS"},   {Scheme::GanMcr2, "GAN_MCR2"},
    {Scheme::InterNsMcr2, "INTER_NS_MCR2"}, {Scheme::DnnMmd, "DNN_MMD"}, {Scheme::FineTune, "FINE_TUNE"},
};

void check_finite(const std::vector<double>& v, long iteration, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string("non-finite ") + what + " at iteration " + std::to_string(iteration));
        }
    }
}

// Real measure for one update: the full table, or a fresh batch.
WeightedOutcomes real_measure(const SchemeConfig& cfg, const BasSpec& bas, const WeightedOutcomes& table,
                              std::uint64_t seed) {
    if (cfg.exact_pstar) return table;
    return WeightedOutcomes::from_batch(sample_target(bas, cfg.batch_m, seed));
}

// Support of the target table only; zero-weight rows would distort BatchNorm.
WeightedOutcomes support_of(const WeightedOutcomes& w) {
    WeightedOutcomes out{w.n_bits, {}, {}};
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w.weights[i] > 0.0) {
            out.outcomes.push_back(w.outcomes[i]);
            out.weights.push_back(w.weights[i]);
        }
    }
    return out;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Upstream gradient of the discriminator objective (to be minimized) with
// respect to the net outputs on the real and generated rows.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> discriminator_upstream(const SchemeConfig& cfg, const RbfKernel& kernel,
                                                                   const Eigen::MatrixXd& out_real,
                                                                   const WeightedOutcomes& real,
                                                                   const Eigen::MatrixXd& out_gen,
                                                                   const WeightedOutcomes& gen) {
    switch (cfg.scheme) {
        case Scheme::GanNs:
        case Scheme::InterNsMcr2: {
            // loss_D = -sum w ln D(real) - sum w ln(1 - D(gen))
            Eigen::MatrixXd ur(out_real.rows(), 1), ug(out_gen.rows(), 1);
            for (Eigen::Index i = 0; i < ur.rows(); ++i) {
                const double d = std::clamp(out_real(i, 0), kScoreClamp, 1.0 - kScoreClamp);
                ur(i, 0) = -real.weights[static_cast<std::size_t>(i)] / d;
            }
            for (Eigen::Index i = 0; i < ug.rows(); ++i) {
                const double d = std::clamp(out_gen(i, 0), kScoreClamp, 1.0 - kScoreClamp);
                ug(i, 0) = gen.weights[static_cast<std::size_t>(i)] / (1.0 - d);
            }
            return {ur, ug};
        }
        case Scheme::GanMcr2: {
            const auto vg = mcr2_weighted(out_gen, as_vector(gen.weights), out_real, as_vector(real.weights),
                                          Mcr2Config{cfg.eps_sq, true});
            return {-vg.grad_b, -vg.grad_a};  // ascent
        }
        case Scheme::DnnMmd: {
            const auto vg = mmd_weighted(kernel, out_gen, as_vector(gen.weights), out_real, as_vector(real.weights));
            return {-vg.grad_b, -vg.grad_a};  // ascent
        }
        default:
            throw ConfigError("scheme has no discriminator");
    }
}

std::vector<double> generator_gradient(const SchemeConfig& cfg, const ShiftedSamples& shifted, MlpNet* net,
                                       const RbfKernel& kernel, const OutcomeKernel& bit_kernel,
                                       const WeightedOutcomes& real) {
    const Mcr2Config mcr{cfg.eps_sq, true};
    switch (cfg.scheme) {
        case Scheme::MmdRbf:
        case Scheme::FineTune:
            return grad_mmd(shifted, bit_kernel, real).grad;
        case Scheme::GanNs:
            return grad_gan_ns(shifted, *net).grad;
        case Scheme::GanMcr2:
            return grad_mcr2_explicit(shifted, *net, real, mcr).grad;
        case Scheme::InterNsMcr2: {
            auto g = grad_gan_ns(shifted, *net).grad;
            if (cfg.alpha == 0.0) return g;
            const auto m = grad_mcr2_explicit(shifted, *net, real, mcr).grad;
            for (std::size_t k = 0; k < g.size(); ++k) g[k] = (1.0 - cfg.alpha) * g[k] + cfg.alpha * m[k];
            return g;
        }
        case Scheme::DnnMmd:
            return grad_deep_mmd(shifted, *net, kernel, real).grad;
    }
    throw ConfigError("unknown scheme");
}

RunResult train_from(const SchemeConfig& cfg, const CircuitSpec& spec, const BasSpec& bas, ParamVector params,
                     long iteration_offset) {
    cfg.validate();
    spec.validate();
    bas.validate();
    if (spec.n_qubits != bas.n_qubits()) throw ConfigError("circuit qubit count does not match the BAS grid");

    const std::uint64_t root = cfg.root_seed;
    const RbfKernel kernel(cfg.bandwidths);
    const OutcomeKernel bit_kernel = bit_rbf_kernel(kernel, spec.n_qubits);
    const auto table = WeightedOutcomes::from_distribution(target_distribution(bas));
    const auto table_support = support_of(table);

    std::optional<MlpNet> net;
    if (const auto head = scheme_head(cfg.scheme)) {
        const auto net_seed = derive_seed(root, {kNetStream});
        net = *head == Head::Scorer ? MlpNet::scorer(spec.n_qubits, net_seed)
                                    : MlpNet::feature_mapper(spec.n_qubits, net_seed);
    }
    Adam opt_g(AdamConfig{cfg.lr_g});
    Adam opt_d(AdamConfig{cfg.lr_d});

    RunResult result;
    result.spec = spec;
    result.bas = bas;
    result.config = cfg;
    result.seed = root;
    result.trace.push_back(evaluate(spec, params, bas, iteration_offset));

    std::vector<double> theta(params.values().begin(), params.values().end());
    for (long t = 1; t <= cfg.iterations; ++t) {
        const auto ut = static_cast<std::uint64_t>(t);
        if (net) {
            for (int s = 0; s < cfg.d_steps_per_g; ++s) {
                const auto us = static_cast<std::uint64_t>(s);
                const auto gen = WeightedOutcomes::from_batch(
                    generate(spec, params, cfg.batch_m, derive_seed(root, {kDiscStream, ut, us})));
                const auto real = cfg.exact_pstar ? table_support
                                                  : real_measure(cfg, bas, table, derive_seed(root, {kRealStream, ut, us + 1}));
                discriminator_update(*net, opt_d, cfg, kernel, real, gen);
            }
            net->set_mode(Mode::Eval);
        }

        GradOptions gopts;
        gopts.batch_m = cfg.batch_m;
        gopts.seed = derive_seed(root, {kShiftStream, ut});
        gopts.fresh_model_batch = cfg.fresh_model_batch;
        const auto shifted = draw_shifted(spec, params, gopts);
        const auto real = real_measure(cfg, bas, table, derive_seed(root, {kRealStream, ut, 0}));
        const auto grad = generator_gradient(cfg, shifted, net ? &*net : nullptr, kernel, bit_kernel, real);
        check_finite(grad, iteration_offset + t, "generator gradient");

        opt_g.step(theta, grad);
        params = ParamVector(theta);

        if (t % cfg.eval_interval == 0 || t == cfg.iterations) {
            result.trace.push_back(evaluate(spec, params, bas, iteration_offset + t));
        }
    }
    if (net) net->set_mode(Mode::Eval);
    result.final_params = std::move(params);
    result.final_net = std::move(net);
    return result;
}

}  // namespace

std::string scheme_name(Scheme s) {
    for (const auto& e : kSchemeNames) {
        if (e.scheme == s) return e.name;
    }
    return "UNKNOWN";
}

Scheme parse_scheme(const std::string& name) {
    for (const auto& e : kSchemeNames) {
        if (name == e.name) return e.scheme;
    }
    throw ConfigError("unknown scheme '" + name + "'");
}

std::optional<Head> scheme_head(Scheme s) {
    switch (s) {
        case Scheme::GanNs:
        case Scheme::InterNsMcr2:
            return Head::Scorer;
        case Scheme::GanMcr2:
        case Scheme::DnnMmd:
            return Head::FeatureMapper;
        default:
            return std::nullopt;
    }
}

void SchemeConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (batch_m < 1) throw ConfigError("batch_m must be at least 1");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("learning rates must be positive");
    if (d_steps_per_g < 0) throw ConfigError("d_steps_per_g must be nonnegative");
    if (iterations < 0) throw ConfigError("iterations must be nonnegative");
    if (eval_interval < 1) throw ConfigError("eval_interval must be at least 1");
    if (!(eps_sq > 0.0)) throw ConfigError("eps_sq must be positive");
    RbfKernel check(bandwidths);
}

// One discriminator update, in train mode. With joint_batchnorm the real and
// generated rows share one pass and hence one set of batch statistics;
// otherwise each source is normalized on its own.
void discriminator_update(MlpNet& net, Adam& opt, const SchemeConfig& cfg, const RbfKernel& kernel,
                        const WeightedOutcomes& real, const WeightedOutcomes& gen) {
    net.set_mode(Mode::Train);
    net.zero_grad();
    if (cfg.joint_batchnorm) {
        const auto n_real = static_cast<Eigen::Index>(real.size());
        const auto n_gen = static_cast<Eigen::Index>(gen.size());
        std::vector<std::uint32_t> rows(real.outcomes);
        rows.insert(rows.end(), gen.outcomes.begin(), gen.outcomes.end());
        Tape tape;
        const Eigen::MatrixXd out = net.forward(bits_matrix(rows, real.n_bits), &tape);
        const auto [ur, ug] = discriminator_upstream(cfg, kernel, out.topRows(n_real), real, out.bottomRows(n_gen), gen);
        Eigen::MatrixXd upstream(out.rows(), out.cols());
        upstream << ur, ug;
        net.backward(tape, upstream);
    } else {
        Tape tape_real, tape_gen;
        const Eigen::MatrixXd out_real = net.forward(bits_matrix(real.outcomes, real.n_bits), &tape_real);
        const Eigen::MatrixXd out_gen = net.forward(bits_matrix(gen.outcomes, gen.n_bits), &tape_gen);
        const auto [ur, ug] = discriminator_upstream(cfg, kernel, out_real, real, out_gen, gen);
        net.backward(tape_real, ur);
        net.backward(tape_gen, ug);
    }
    adam_step(net, opt);
}

RunResult train(const SchemeConfig& cfg, const CircuitSpec& spec, const BasSpec& bas, const ParamVector* init) {
    spec.validate();
    ParamVector params = init ? *init : random_params(spec, derive_seed(cfg.root_seed, {kInitStream}));
    if (params.size() != spec.num_params()) throw ShapeError("initial parameters do not match the circuit");
    return train_from(cfg, spec, bas, std::move(params), 0);
}

RunResult fine_tune(const RunResult& prior, const SchemeConfig& ft_cfg) {
    if (ft_cfg.scheme != Scheme::MmdRbf && ft_cfg.scheme != Scheme::FineTune) {
        throw ConfigError("fine-tuning uses the MMD_RBF loss");
    }
    const long offset = prior.trace.empty() ? 0 : prior.trace.back().iteration;
    RunResult next = train_from(ft_cfg, prior.spec, prior.bas, prior.final_params, offset);
    std::vector<EvalReport> trace = prior.trace;
    trace.insert(trace.end(), next.trace.begin() + 1, next.trace.end());  // drop the duplicate starting point
    next.trace = std::move(trace);
    return next;
}

std::vector<RunResult> run_seeds(const SchemeConfig& base, const CircuitSpec& spec, const BasSpec& bas,
                                 const std::vector<std::uint64_t>& seeds, int jobs) {
    base.validate();
    std::vector<std::optional<RunResult>> slots(seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            try {
                SchemeConfig cfg = base;
                cfg.root_seed = seeds[i];
                slots[i] = train(cfg, spec, bas);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    std::vector<RunResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

TraceBand aggregate_tv(const std::vector<RunResult>& runs) {
    TraceBand band;
    if (runs.empty()) return band;
    const std::size_t len = runs.front().trace.size();
    for (const auto& r : runs) {
        if (r.trace.size() != len) throw ShapeError("aggregate_tv: runs have different trace lengths");
    }
    const double n = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < len; ++i) {
        double sum = 0.0, sum_sq = 0.0;
        for (const auto& r : runs) {
            sum += r.trace[i].tv;
            sum_sq += r.trace[i].tv * r.trace[i].tv;
        }
        const double mean = sum / n;
        band.iteration.push_back(runs.front().trace[i].iteration);
        band.mean.push_back(mean);
        band.sd.push_back(std::sqrt(std::max(0.0, sum_sq / n - mean * mean)));
    }
    return band;
}

std::vector<GridCell> grid_search(const SchemeConfig& base, const CircuitSpec& spec, const BasSpec& bas,
                                  const std::vector<double>& lr_g, const std::vector<double>& lr_d, int n_seeds,
                                  int jobs) {
    if (lr_g.empty() || lr_d.empty()) throw ConfigError("grid_search: learning-rate lists must be nonempty");
    if (n_seeds < 1) throw ConfigError("grid_search: need at least one seed");
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < n_seeds; ++s) seeds.push_back(derive_seed(base.root_seed, {static_cast<std::uint64_t>(s)}));

    std::vector<GridCell> cells;
    for (double g : lr_g) {
        for (double d : lr_d) {
            SchemeConfig cfg = base;
            cfg.lr_g = g;
            cfg.lr_d = d;
            GridCell cell{g, d, run_seeds(cfg, spec, bas, seeds, jobs), {}};
            cell.band = aggregate_tv(cell.runs);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

void write_run(const RunResult& run, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "trace.csv");
        if (!csv) throw IoError("cannot write " + (dir / "trace.csv").string());
        csv << std::setprecision(17) << "iteration,tv,invalid_mass";
        const std::size_t modes = run.bas.mode_count();
        for (std::size_t i = 0; i < modes; ++i) csv << ",mode_" << i;
        csv << '\n';
        for (const auto& r : run.trace) {
            csv << r.iteration << ',' << r.tv << ',' << r.invalid_mass;
            for (double m : r.mode_masses) csv << ',' << m;
            csv << '\n';
        }
    }
    const auto& cfg = run.config;
    nlohmann::json report = {
        {"schema_version", 1},
        {"scheme", scheme_name(cfg.scheme)},
        {"bas", std::to_string(run.bas.height) + "x" + std::to_string(run.bas.width)},
        {"depth", run.spec.depth},
        {"seed", run.seed},
        {"alpha", cfg.alpha},
        {"batch_m", cfg.batch_m},
        {"lr_g", cfg.lr_g},
        {"lr_d", cfg.lr_d},
        {"d_steps_per_g", cfg.d_steps_per_g},
        {"iterations", cfg.iterations},
        {"exact_pstar", cfg.exact_pstar},
        {"bandwidths", cfg.bandwidths},
        {"eps_sq", cfg.eps_sq},
        {"final", run.final_report().to_json()},
    };
    std::ofstream js(dir / "report.json");
    if (!js) throw IoError("cannot write " + (dir / "report.json").string());
    js << report.dump(2) << '\n';
    save_params(dir / "params.txt", run.spec, run.final_params);
    if (run.final_net) run.final_net->save(dir / "net.txt");
}

void write_band(const TraceBand& band, const std::filesystem::path& path) {
    std::ofstream csv(path);
    if (!csv) throw IoError("cannot write " + path.string());
    csv << std::setprecision(17) << "iteration,tv_mean,tv_sd\n";
    for (std::size_t i = 0; i < band.mean.size(); ++i) {
        csv << band.iteration[i] << ',' << band.mean[i] << ',' << band.sd[i] << '\n';
    }
}

}  // namespace qcbm
