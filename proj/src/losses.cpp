#include "qcbm/losses.hpp"

#include <algorithm>
#include <cmath>

#include "qcbm/error.hpp"

namespace qcbm {

namespace {

Eigen::VectorXd uniform_weights(Eigen::Index m) {
    return Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
}

Eigen::VectorXd to_vector(const std::vector<double>& w) {
    return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
}

void require_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + " contains non-finite entries");
}

// sum_ij w_i v_j K(a_i, b_j) and its gradient with respect to the rows of a.
double weighted_cross(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::VectorXd& wa, const Eigen::MatrixXd& b,
                      const Eigen::VectorXd& wb, Eigen::MatrixXd* grad_a) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            const Eigen::RowVectorXd diff = a.row(i) - b.row(j);
            const double d2 = diff.squaredNorm();
            s += wa(i) * wb(j) * k.from_sq_dist(d2);
            if (grad_a) grad_a->row(i) += wa(i) * wb(j) * k.d_sq_dist(d2) * 2.0 * diff;
        }
    }
    return s;
}

Eigen::MatrixXd second_moment(const Eigen::MatrixXd& z, const Eigen::VectorXd& w) {
    return z.transpose() * w.asDiagonal() * z;
}

Eigen::MatrixXd center(const Eigen::MatrixXd& z, const Eigen::VectorXd& w) {
    const Eigen::RowVectorXd mean = (w.transpose() * z) / w.sum();
    return z.rowwise() - mean;
}

// Undo centering in a gradient: z_i = x_i - sum_j w_j x_j / W.
Eigen::MatrixXd uncenter_grad(const Eigen::MatrixXd& g, const Eigen::VectorXd& w) {
    const Eigen::RowVectorXd total = g.colwise().sum();
    return g - (w / w.sum()) * total;
}

}  // namespace

void Mcr2Config::validate() const {
    if (!(eps_sq > 0.0) || !std::isfinite(eps_sq)) throw ConfigError("eps_sq must be positive");
}

double mmd_loss(const RbfKernel& k, const Eigen::MatrixXd& gen, const Eigen::MatrixXd& real) {
    if (gen.rows() == 0 || real.rows() == 0) throw ShapeError("mmd_loss: empty batch");
    if (gen.cols() != real.cols()) throw ShapeError("mmd_loss: batches live in different spaces");
    return mmd_weighted(k, gen, uniform_weights(gen.rows()), real, uniform_weights(real.rows())).value;
}

double mmd_loss(const RbfKernel& k, const SampleBatch& gen, const SampleBatch& real) {
    if (gen.n_bits != real.n_bits) throw ShapeError("mmd_loss: batches have different bit widths");
    return mmd_loss(k, bits_matrix(gen.outcomes, gen.n_bits), bits_matrix(real.outcomes, real.n_bits));
}

ValueAndGrad mmd_weighted(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::VectorXd& wa,
                          const Eigen::MatrixXd& b, const Eigen::VectorXd& wb) {
    if (a.cols() != b.cols()) throw ShapeError("mmd: feature dimensions differ");
    if (a.rows() != wa.size() || b.rows() != wb.size()) throw ShapeError("mmd: weight count mismatch");
    if (a.rows() == 0 || b.rows() == 0) throw ShapeError("mmd: empty batch");
    ValueAndGrad out;
    out.grad_a = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    out.grad_b = Eigen::MatrixXd::Zero(b.rows(), b.cols());
    Eigen::MatrixXd tmp_a = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    Eigen::MatrixXd tmp_b = Eigen::MatrixXd::Zero(b.rows(), b.cols());

    const double aa = weighted_cross(k, a, wa, a, wa, &tmp_a);
    out.grad_a += 2.0 * tmp_a;  // a appears in both slots
    tmp_a.setZero();
    const double ab = weighted_cross(k, a, wa, b, wb, &tmp_a);
    weighted_cross(k, b, wb, a, wa, &tmp_b);
    out.grad_a -= 2.0 * tmp_a;
    out.grad_b -= 2.0 * tmp_b;
    tmp_b.setZero();
    const double bb = weighted_cross(k, b, wb, b, wb, &tmp_b);
    out.grad_b += 2.0 * tmp_b;
    out.value = aa - 2.0 * ab + bb;
    return out;
}

GanLosses gan_ns_losses(std::span<const double> scores_real, std::span<const double> scores_gen) {
    if (scores_real.empty() || scores_gen.empty()) throw ShapeError("gan_ns_losses: empty score vector");
    auto clamp = [](double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); };
    double real_term = 0.0;
    for (double s : scores_real) real_term += std::log(clamp(s));
    double fake_term = 0.0;
    double gen_term = 0.0;
    for (double s : scores_gen) {
        fake_term += std::log(1.0 - clamp(s));
        gen_term += std::log(clamp(s));
    }
    const auto nr = static_cast<double>(scores_real.size());
    const auto ng = static_cast<double>(scores_gen.size());
    return {-real_term / nr - fake_term / ng, -gen_term / ng};
}

double log_det_spd(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw ShapeError("log_det_spd: matrix must be square");
    Eigen::MatrixXd m = a;
    double jitter = 1e-12;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) {
            return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        }
        m.diagonal().array() += jitter;
        jitter *= 100.0;
    }
    throw NumericError("log_det_spd: matrix is not positive definite");
}

double mcr2_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Mcr2Config& cfg) {
    if (x.rows() != y.rows()) throw ShapeError("mcr2_distance: batch sizes differ");
    if (x.rows() == 0) throw ShapeError("mcr2_distance: empty batch");
    return mcr2_weighted(x, uniform_weights(x.rows()), y, uniform_weights(y.rows()), cfg).value;
}

ValueAndGrad mcr2_weighted(const Eigen::MatrixXd& x, const Eigen::VectorXd& wx, const Eigen::MatrixXd& y,
                           const Eigen::VectorXd& wy, const Mcr2Config& cfg) {
    cfg.validate();
    if (x.cols() != y.cols()) throw ShapeError("mcr2: feature dimensions differ");
    if (x.rows() != wx.size() || y.rows() != wy.size()) throw ShapeError("mcr2: weight count mismatch");
    require_finite(x, "mcr2 generated features");
    require_finite(y, "mcr2 real features");

    const Eigen::MatrixXd xc = cfg.assume_centered ? x : center(x, wx);
    const Eigen::MatrixXd yc = cfg.assume_centered ? y : center(y, wy);
    const auto d = static_cast<double>(x.cols());
    const double a = d / (2.0 * cfg.eps_sq);
    const double b = d / cfg.eps_sq;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(x.cols(), x.cols());
    const Eigen::MatrixXd sx = second_moment(xc, wx);
    const Eigen::MatrixXd sy = second_moment(yc, wy);
    const Eigen::MatrixXd joint = id + a * (sx + sy);
    const Eigen::MatrixXd own_x = id + b * sx;
    const Eigen::MatrixXd own_y = id + b * sy;

    ValueAndGrad out;
    out.value = 0.5 * log_det_spd(joint) - 0.25 * log_det_spd(own_x) - 0.25 * log_det_spd(own_y);

    // d/dz_i logdet(I + c sum_j w_j z_j z_j^T) = 2 c w_i (I + c S)^{-1} z_i
    const Eigen::MatrixXd joint_inv = joint.llt().solve(id);
    const Eigen::MatrixXd own_x_inv = own_x.llt().solve(id);
    const Eigen::MatrixXd own_y_inv = own_y.llt().solve(id);
    out.grad_a = wx.asDiagonal() * xc * (a * joint_inv - 0.5 * b * own_x_inv);
    out.grad_b = wy.asDiagonal() * yc * (a * joint_inv - 0.5 * b * own_y_inv);
    if (!cfg.assume_centered) {
        out.grad_a = uncenter_grad(out.grad_a, wx);
        out.grad_b = uncenter_grad(out.grad_b, wy);
    }
    return out;
}

double interpolated_g_loss(double alpha, double loss_g_ns, double delta_r) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("interpolation alpha must lie in [0, 1]");
    return (1.0 - alpha) * loss_g_ns + alpha * delta_r;
}

double deep_kernel_mmd_loss(MlpNet& net, const RbfKernel& k, const SampleBatch& gen, const SampleBatch& real) {
    if (net.head() != Head::FeatureMapper) throw ConfigError("deep kernel MMD needs a feature-mapper network");
    const Eigen::MatrixXd fg = net.forward(bits_matrix(gen.outcomes, gen.n_bits));
    const Eigen::MatrixXd fr = net.forward(bits_matrix(real.outcomes, real.n_bits));
    return mmd_loss(k, fg, fr);
}

double mmd_on(const OutcomeKernel& k, const WeightedOutcomes& p, const WeightedOutcomes& q) {
    auto cross = [&](const WeightedOutcomes& a, const WeightedOutcomes& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < b.size(); ++j) s += a.weights[i] * b.weights[j] * k(a.outcomes[i], b.outcomes[j]);
        }
        return s;
    };
    return cross(p, p) - 2.0 * cross(p, q) + cross(q, q);
}

double gan_g_loss_on(MlpNet& scorer, const WeightedOutcomes& p) {
    if (scorer.head() != Head::Scorer) throw ConfigError("GAN loss needs a scorer network");
    const Eigen::VectorXd scores = scorer.forward(bits_matrix(p.outcomes, p.n_bits)).col(0);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s -= p.weights[i] * std::log(std::clamp(scores(static_cast<Eigen::Index>(i)), kScoreClamp, 1.0 - kScoreClamp));
    }
    return s;
}

double mcr2_on(MlpNet& net, const WeightedOutcomes& p, const WeightedOutcomes& q, const Mcr2Config& cfg) {
    const Eigen::MatrixXd fp = net.features(bits_matrix(p.outcomes, p.n_bits));
    const Eigen::MatrixXd fq = net.features(bits_matrix(q.outcomes, q.n_bits));
    return mcr2_weighted(fp, to_vector(p.weights), fq, to_vector(q.weights), cfg).value;
}

double deep_mmd_on(MlpNet& net, const RbfKernel& k, const WeightedOutcomes& p, const WeightedOutcomes& q) {
    if (net.head() != Head::FeatureMapper) throw ConfigError("deep kernel MMD needs a feature-mapper network");
    const Eigen::MatrixXd fp = net.forward(bits_matrix(p.outcomes, p.n_bits));
    const Eigen::MatrixXd fq = net.forward(bits_matrix(q.outcomes, q.n_bits));
    return mmd_weighted(k, fp, to_vector(p.weights), fq, to_vector(q.weights)).value;
}

}  // namespace qcbm
