#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qcbm/bas.hpp"
#include "qcbm/circuit.hpp"
#include "qcbm/kernels.hpp"
#include "qcbm/losses.hpp"
#include "qcbm/metrics.hpp"
#include "qcbm/neural.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

enum class Scheme { MmdRbf, GanNs, GanMcr2, InterNsMcr2, DnnMmd, FineTune };

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

/// Which network a scheme trains against, if any.
std::optional<Head> scheme_head(Scheme s);

struct SchemeConfig {
    Scheme scheme = Scheme::MmdRbf;
    double alpha = 0.0;  // InterNsMcr2 only
    int batch_m = 4;
    double lr_g = 1e-3;
    double lr_d = 1e-3;
    int d_steps_per_g = 2;
    long iterations = 1000;
    /// Real-side expectations use the full target table instead of samples.
    bool exact_pstar = false;
    std::uint64_t root_seed = 0;
    long eval_interval = 10;
    std::vector<double> bandwidths{0.25, 0.5, 1, 2, 4};
    double eps_sq = 0.5;
    bool fresh_model_batch = false;
    /// Real and generated rows share BatchNorm statistics in discriminator
    /// updates. When false each source is normalized separately.
    bool joint_batchnorm = true;

    void validate() const;
};

struct RunResult {
    CircuitSpec spec;
    BasSpec bas;
    SchemeConfig config;
    std::vector<EvalReport> trace;
    ParamVector final_params;
    std::optional<MlpNet> final_net;
    std::uint64_t seed = 0;

    [[nodiscard]] const EvalReport& final_report() const { return trace.back(); }
};

/// One Adam update of the scheme's discriminator objective on a real and a
/// generated measure. Leaves the net in train mode.
void discriminator_update(MlpNet& net, Adam& opt, const SchemeConfig& cfg, const RbfKernel& kernel,
                          const WeightedOutcomes& real, const WeightedOutcomes& gen);

/// Runs one scheme from random initial parameters, or from `init` if given.
RunResult train(const SchemeConfig& cfg, const CircuitSpec& spec, const BasSpec& bas,
                const ParamVector* init = nullptr);

/// Continues from a prior run's parameters with the image-space MMD loss.
/// The new trace is appended after the prior one.
RunResult fine_tune(const RunResult& prior, const SchemeConfig& ft_cfg);

/// Runs `seeds` in parallel with at most `jobs` workers. Results are ordered
/// as the seeds are.
std::vector<RunResult> run_seeds(const SchemeConfig& base, const CircuitSpec& spec, const BasSpec& bas,
                                 const std::vector<std::uint64_t>& seeds, int jobs);

struct TraceBand {
    std::vector<long> iteration;
    std::vector<double> mean;
    std::vector<double> sd;  // population standard deviation across runs
};

TraceBand aggregate_tv(const std::vector<RunResult>& runs);

struct GridCell {
    double lr_g = 0.0;
    double lr_d = 0.0;
    std::vector<RunResult> runs;
    TraceBand band;
};

std::vector<GridCell> grid_search(const SchemeConfig& base, const CircuitSpec& spec, const BasSpec& bas,
                                  const std::vector<double>& lr_g, const std::vector<double>& lr_d, int n_seeds,
                                  int jobs);

/// trace.csv, report.json, params.txt and (when present) net.txt.
void write_run(const RunResult& run, const std::filesystem::path& dir);
void write_band(const TraceBand& band, const std::filesystem::path& path);

}  // namespace qcbm
