#pragma once

#include <cstdint>
#include <vector>

#include "qcbm/circuit.hpp"
#include "qcbm/kernels.hpp"
#include "qcbm/losses.hpp"
#include "qcbm/neural.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

// Parameter-shift gradient estimators. For parameter k, d p(x)/d theta_k =
// (p_{k+}(x) - p_{k-}(x)) / 2 where k+/k- shift theta_k by +/- pi/2, so every
// loss gradient becomes a difference of expectations under the two shifted
// circuits. The real-data side is a WeightedOutcomes: a sampled batch, or the
// full p* table (exact-p* control mode).

enum class Expectation {
    Sampled,  // draw batch_m samples per circuit
    Exact,    // replace every model-side expectation by a sum over 2^n outcomes
};

struct GradOptions {
    int batch_m = 4;
    std::uint64_t seed = 0;
    Expectation mode = Expectation::Sampled;
    /// Draw an independent p_theta batch for every parameter instead of one
    /// shared batch per step.
    bool fresh_model_batch = false;

    void validate() const;
};

struct GradEstimate {
    std::vector<double> grad;
    std::size_t batches_used = 0;  // sampled circuit batches consumed
};

/// Measures under p_theta and under each shifted circuit.
struct ShiftedSamples {
    std::vector<WeightedOutcomes> model;  // one shared entry, or one per parameter
    std::vector<WeightedOutcomes> plus;
    std::vector<WeightedOutcomes> minus;
    std::size_t batches_used = 0;

    [[nodiscard]] const WeightedOutcomes& model_for(std::size_t k) const { return model.size() == 1 ? model[0] : model[k]; }
    [[nodiscard]] std::size_t num_params() const { return plus.size(); }
};

ShiftedSamples draw_shifted(const CircuitSpec& spec, const ParamVector& params, const GradOptions& opts);

// Each estimator has a convenience form that draws its own samples and a form
// over pre-drawn samples so that combined objectives share one set of draws.

GradEstimate grad_mmd(const CircuitSpec& spec, const ParamVector& params, const RbfKernel& k,
                      const WeightedOutcomes& real, const GradOptions& opts);
GradEstimate grad_mmd(const ShiftedSamples& s, const OutcomeKernel& k, const WeightedOutcomes& real);

/// Uses net in whatever mode it is in; callers pass an eval-mode scorer.
GradEstimate grad_gan_ns(const CircuitSpec& spec, const ParamVector& params, MlpNet& net, const GradOptions& opts);
GradEstimate grad_gan_ns(const ShiftedSamples& s, MlpNet& net);

/// Explicit features phi = net.features(). The second-moment matrices are
/// formed from the p_theta measure and the real measure.
GradEstimate grad_mcr2_explicit(const CircuitSpec& spec, const ParamVector& params, MlpNet& net,
                                const WeightedOutcomes& real, const Mcr2Config& cfg, const GradOptions& opts);
GradEstimate grad_mcr2_explicit(const ShiftedSamples& s, MlpNet& net, const WeightedOutcomes& real, const Mcr2Config& cfg);

/// Same gradient through kernel evaluations only (Woodbury form over the
/// pooled sample set T = [X, Y]). feature_dim is the d of the rate formula.
GradEstimate grad_mcr2_kernel(const CircuitSpec& spec, const ParamVector& params, const OutcomeKernel& kernel,
                              int feature_dim, const WeightedOutcomes& real, const Mcr2Config& cfg,
                              const GradOptions& opts);
GradEstimate grad_mcr2_kernel(const ShiftedSamples& s, const OutcomeKernel& kernel, int feature_dim,
                              const WeightedOutcomes& real, const Mcr2Config& cfg);

/// MMD gradient with K_phi(x, y) = K(f(x), f(y)), f = feature-mapper output.
GradEstimate grad_deep_mmd(const CircuitSpec& spec, const ParamVector& params, MlpNet& net, const RbfKernel& k,
                           const WeightedOutcomes& real, const GradOptions& opts);
GradEstimate grad_deep_mmd(const ShiftedSamples& s, MlpNet& net, const RbfKernel& k, const WeightedOutcomes& real);

/// Outcome kernel over net features: K(f(x), f(y)). Evaluates the net once
/// over all 2^n outcomes.
OutcomeKernel feature_rbf_kernel(MlpNet& net, const RbfKernel& k, int n_bits);

/// Linear kernel phi(x)^T phi(y) over net.features().
OutcomeKernel feature_linear_kernel(MlpNet& net, int n_bits);

}  // namespace qcbm
