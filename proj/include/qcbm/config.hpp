#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qcbm/bas.hpp"
#include "qcbm/trainer.hpp"

namespace qcbm {

/// One experiment file. `key = value` per line, `#` starts a comment. List
/// valued keys (alpha, batch_m, lr_g, lr_d) take comma-separated values and
/// the experiment runs their Cartesian product.
struct ExperimentConfig {
    SchemeConfig base;
    BasSpec bas{2, 2};
    int depth = 3;
    std::vector<double> alphas{0.0};
    std::vector<int> batch_sizes{4};
    std::vector<double> lr_gs{1e-3};
    std::vector<double> lr_ds{1e-3};
    int n_seeds = 1;
    std::uint64_t root_seed = 0;
    std::string output_dir;
    bool dump_features = false;

    // FINE_TUNE: base fields drive the GAN_NS pre-training, ft_* the MMD stage.
    double ft_lr_g = 1e-4;
    long ft_iterations = 2000;
    int ft_batch_m = 4;
    bool ft_exact_pstar = false;
    /// Only pre-trained runs whose final TV is at least this are fine-tuned.
    double ft_min_tv = 0.0;

    [[nodiscard]] std::uint64_t run_seed(int index) const;
    void validate() const;
};

/// Throws ConfigError with "file:line: message" for malformed lines, unknown
/// or duplicated keys, and "missing required key 'k'" for absent ones.
ExperimentConfig parse_experiment(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Keys accepted in experiment files, in documentation order.
const std::vector<std::string>& experiment_keys();

}  // namespace qcbm
