#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcbm/config.hpp"
#include "qcbm/trainer.hpp"

namespace qcbm {

/// All seeds of one point of the (alpha, batch_m, lr_g, lr_d) product.
struct CellResult {
    SchemeConfig config;  // root_seed unset; per-run seeds are in runs[i].seed
    std::vector<RunResult> runs;
    /// FINE_TUNE only: the pre-training runs that were selected, aligned with runs.
    std::vector<RunResult> pretrained;
    TraceBand band;

    [[nodiscard]] std::vector<double> final_tv() const;
    [[nodiscard]] std::vector<double> pretrained_tv() const;
    /// Per-mode median of the final mode masses across runs.
    [[nodiscard]] std::vector<double> median_mode_masses() const;
    [[nodiscard]] std::string label() const;
};

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

/// Runs every cell of the experiment. `progress` (may be null) receives one
/// line per finished cell.
std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, int jobs, std::ostream* progress = nullptr);

/// Run directories per cell and seed, band.csv per cell, summary.csv and
/// summary.json at the top.
void write_experiment(const ExperimentConfig& cfg, const std::vector<CellResult>& cells,
                      const std::filesystem::path& out_dir);

nlohmann::json summarize(const CellResult& cell);

/// Resolves a config's output_dir against the output root (the
/// QCBM_OUTPUT_ROOT environment variable, else `fallback`).
std::filesystem::path resolve_output(const std::string& output_dir, const std::filesystem::path& fallback = "runs");

}  // namespace qcbm
