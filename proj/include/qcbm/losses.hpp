#pragma once

#include <span>

#include <Eigen/Dense>

#include "qcbm/kernels.hpp"
#include "qcbm/neural.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

// Feature and sample matrices throughout hold one sample per row, so a batch
// of m d-dimensional features is m x d and its second-moment matrix is
// Z^T Z / m. Weighted variants replace 1/m by per-row weights.

struct Mcr2Config {
    double eps_sq = 0.5;
    /// When false, features are centered (weighted mean removed) first.
    bool assume_centered = true;

    void validate() const;
};

/// Biased (V-statistic) MMD^2 estimate, self-pairs included.
double mmd_loss(const RbfKernel& k, const Eigen::MatrixXd& gen, const Eigen::MatrixXd& real);
double mmd_loss(const RbfKernel& k, const SampleBatch& gen, const SampleBatch& real);

struct ValueAndGrad {
    double value = 0.0;
    Eigen::MatrixXd grad_a;  // d value / d rows of the first argument
    Eigen::MatrixXd grad_b;
};

/// sum w_i w_j K(a_i, a_j) - 2 sum w_i v_j K(a_i, b_j) + sum v_i v_j K(b_i, b_j)
ValueAndGrad mmd_weighted(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::VectorXd& wa,
                          const Eigen::MatrixXd& b, const Eigen::VectorXd& wb);

struct GanLosses {
    double loss_d = 0.0;
    double loss_g = 0.0;
};

inline constexpr double kScoreClamp = 1e-7;

/// Non-saturating losses. Scores are clamped to [1e-7, 1 - 1e-7] before the logs.
GanLosses gan_ns_losses(std::span<const double> scores_real, std::span<const double> scores_gen);

/// log det of a symmetric positive definite matrix via Cholesky; retries with
/// 1e-12 diagonal jitter if the factorization fails.
double log_det_spd(const Eigen::MatrixXd& a);

/// Coding-rate reduction between two equally sized feature batches.
double mcr2_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Mcr2Config& cfg);

/// Weighted form: second moments are sum_i w_i z_i z_i^T. Equals
/// mcr2_distance when both weight vectors are 1/m.
ValueAndGrad mcr2_weighted(const Eigen::MatrixXd& x, const Eigen::VectorXd& wx, const Eigen::MatrixXd& y,
                           const Eigen::VectorXd& wy, const Mcr2Config& cfg);

/// (1 - alpha) loss_g_ns + alpha delta_r, alpha in [0, 1].
double interpolated_g_loss(double alpha, double loss_g_ns, double delta_r);

/// MMD between feature-mapper outputs of the two batches, in the net's
/// current mode.
double deep_kernel_mmd_loss(MlpNet& net, const RbfKernel& k, const SampleBatch& gen, const SampleBatch& real);

// Losses on measures over outcomes. With exact tables these are the losses
// "on exact distributions" that gradient estimators differentiate.

double mmd_on(const OutcomeKernel& k, const WeightedOutcomes& p, const WeightedOutcomes& q);
/// -sum_x p(x) ln D(x) with an eval-mode scorer.
double gan_g_loss_on(MlpNet& scorer, const WeightedOutcomes& p);
/// Delta R between feature second moments of p and q under net.features().
double mcr2_on(MlpNet& net, const WeightedOutcomes& p, const WeightedOutcomes& q, const Mcr2Config& cfg);
double deep_mmd_on(MlpNet& net, const RbfKernel& k, const WeightedOutcomes& p, const WeightedOutcomes& q);

}  // namespace qcbm
