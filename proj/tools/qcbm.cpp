// qcbm: run experiments, reproduce the canned studies, evaluate checkpoints.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcbm/config.hpp"
#include "qcbm/error.hpp"
#include "qcbm/experiment.hpp"
#include "qcbm/metrics.hpp"

#ifndef QCBM_CONFIG_DIR
#define QCBM_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using namespace qcbm;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int default_jobs() { return std::max(1U, std::thread::hardware_concurrency()); }

std::vector<CellResult> run_config(ExperimentConfig cfg, int jobs, int seeds_override, fs::path* out_dir) {
    if (seeds_override > 0) cfg.n_seeds = seeds_override;
    const auto out = resolve_output(cfg.output_dir);
    std::cerr << "running " << scheme_name(cfg.base.scheme) << " on BAS(" << cfg.bas.height << "x" << cfg.bas.width
              << "), " << cfg.n_seeds << " seed(s) per cell -> " << out.string() << '\n';
    auto cells = run_experiment(cfg, jobs, &std::cerr);
    write_experiment(cfg, cells, out);
    if (out_dir) *out_dir = out;
    return cells;
}

int cmd_run(const std::string& path, int jobs, bool dry_run, int seeds) {
    auto cfg = load_experiment(path);
    if (seeds > 0) cfg.n_seeds = seeds;
    if (dry_run) {
        const std::size_t cells = cfg.alphas.size() * cfg.batch_sizes.size() * cfg.lr_gs.size() * cfg.lr_ds.size();
        std::cout << path << ": ok (" << cells << " cell(s) x " << cfg.n_seeds << " seed(s), output "
                  << resolve_output(cfg.output_dir).string() << ")\n";
        return 0;
    }
    fs::path out;
    const auto cells = run_config(cfg, jobs, 0, &out);
    nlohmann::json all = nlohmann::json::array();
    for (const auto& c : cells) all.push_back(summarize(c));
    std::cout << all.dump(2) << '\n';
    return 0;
}

void print_batch_table(const std::vector<std::vector<CellResult>>& per_scheme, const fs::path& path) {
    std::vector<int> sizes;
    for (const auto& c : per_scheme.front()) sizes.push_back(c.config.batch_m);
    std::ofstream csv(path);
    csv << "scheme";
    std::cout << std::left << std::setw(12) << "scheme";
    for (int m : sizes) {
        csv << ",batch_" << m;
        std::cout << std::setw(12) << ("batch " + std::to_string(m));
    }
    csv << '\n';
    std::cout << '\n';
    for (const auto& cells : per_scheme) {
        const std::string name = scheme_name(cells.front().config.scheme);
        csv << name;
        std::cout << std::setw(12) << name;
        for (const auto& c : cells) {
            const double tv = median(c.final_tv());
            csv << ',' << tv;
            std::cout << std::setw(12) << std::fixed << std::setprecision(4) << tv;
        }
        csv << '\n';
        std::cout << '\n';
    }
    std::cout << "(median final TV over seeds; table written to " << path.string() << ")\n";
}

void write_curves(const std::vector<CellResult>& cells, const fs::path& path) {
    std::ofstream csv(path);
    csv << "iteration";
    for (const auto& c : cells) csv << ',' << c.label();
    csv << '\n';
    const std::size_t len = cells.front().band.mean.size();
    for (std::size_t i = 0; i < len; ++i) {
        csv << cells.front().band.iteration[i];
        for (const auto& c : cells) csv << ',' << (i < c.band.mean.size() ? c.band.mean[i] : std::nan(""));
        csv << '\n';
    }
}

int cmd_reproduce(const std::string& study, int seeds, int jobs, const fs::path& config_dir) {
    const fs::path root = resolve_output(study);
    fs::create_directories(root);
    if (study == "batch_size") {
        std::vector<std::vector<CellResult>> per_scheme;
        for (const char* name : {"mmd_rbf", "gan_ns", "gan_mcr2"}) {
            per_scheme.push_back(run_config(load_experiment(config_dir / "batch_size" / (std::string(name) + ".conf")),
                                            jobs, seeds, nullptr));
        }
        print_batch_table(per_scheme, root / "tv_table.csv");
        return 0;
    }
    if (study == "moment_matching") {
        std::vector<CellResult> curves;
        for (const char* name : {"inter_ns_mcr2", "dnn_mmd"}) {
            auto cells = run_config(load_experiment(config_dir / "moment_matching" / (std::string(name) + ".conf")),
                                    jobs, seeds, nullptr);
            for (auto& c : cells) curves.push_back(std::move(c));
        }
        write_curves(curves, root / "mean_tv_curves.csv");
        std::cout << std::left << std::setw(28) << "cell" << "mean final TV\n";
        for (const auto& c : curves) {
            std::cout << std::setw(28) << c.label() << std::fixed << std::setprecision(4) << mean(c.final_tv()) << '\n';
        }
        std::cout << "(per-cell mean TV curves written to " << (root / "mean_tv_curves.csv").string() << ")\n";
        return 0;
    }
    if (study == "fine_tune") {
        const auto cells = run_config(load_experiment(config_dir / "fine_tune.conf"), jobs, seeds, nullptr);
        nlohmann::json pairs = nlohmann::json::array();
        for (const auto& c : cells) {
            const double before = median(c.pretrained_tv());
            const double after = median(c.final_tv());
            pairs.push_back({{"cell", c.label()}, {"runs", c.runs.size()}, {"tv_before", before}, {"tv_after", after}});
            std::cout << c.label() << ": " << c.runs.size() << " run(s), median TV " << std::fixed << std::setprecision(4)
                      << before << " -> " << after << '\n';
        }
        std::ofstream(root / "before_after.json") << nlohmann::json{{"schema_version", 1}, {"pairs", pairs}}.dump(2)
                                                  << '\n';
        return 0;
    }
    throw ConfigError("unknown study '" + study + "' (expected batch_size, moment_matching or fine_tune)");
}

int cmd_eval(const std::string& checkpoint, const std::string& bas_text) {
    const auto bas = parse_bas_spec(bas_text);
    const auto loaded = load_params(checkpoint);
    if (loaded.spec.n_qubits != bas.n_qubits()) {
        throw ConfigError("checkpoint has " + std::to_string(loaded.spec.n_qubits) + " qubits but BAS(" + bas_text +
                          ") needs " + std::to_string(bas.n_qubits()));
    }
    std::cout << evaluate(loaded.spec, loaded.params, bas).to_json().dump(2) << '\n';
    return 0;
}

int cmd_dataset(const std::string& bas_text, const std::string& stem) {
    dump_dataset(parse_bas_spec(bas_text), stem);
    std::cout << "wrote " << stem << ".txt and " << stem << ".json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"QCBM training lab"};
    app.require_subcommand(1);

    std::string config_path;
    int jobs = default_jobs();
    bool dry_run = false;
    int seeds = 0;
    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
    run->add_option("--seeds", seeds, "override the number of seeds")->check(CLI::PositiveNumber);
    run->add_flag("--dry-run", dry_run, "validate the config and exit");

    std::string study;
    std::string config_dir = QCBM_CONFIG_DIR;
    auto* reproduce = app.add_subcommand("reproduce", "run a canned study");
    reproduce->add_option("study", study, "batch_size | moment_matching | fine_tune")->required();
    reproduce->add_option("--seeds", seeds, "override the number of seeds")->check(CLI::PositiveNumber);
    reproduce->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
    reproduce->add_option("--configs", config_dir, "directory holding the canned configs");

    std::string checkpoint;
    std::string bas;
    auto* eval = app.add_subcommand("eval", "print the evaluation report of a parameter checkpoint");
    eval->add_option("--checkpoint", checkpoint, "params.txt from a run directory")->required();
    eval->add_option("--bas", bas, "grid as HxW")->required();

    std::string stem;
    auto* dataset = app.add_subcommand("dataset", "write the valid patterns of a BAS grid");
    dataset->add_option("--bas", bas, "grid as HxW")->required();
    dataset->add_option("--out", stem, "output path without extension")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) return cmd_run(config_path, jobs, dry_run, seeds);
        if (*reproduce) return cmd_reproduce(study, seeds, jobs, config_dir);
        if (*eval) return cmd_eval(checkpoint, bas);
        if (*dataset) return cmd_dataset(bas, stem);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}
