#include "qcbm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "qcbm/error.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

namespace {

std::string compact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

CellResult run_fine_tune_cell(const ExperimentConfig& cfg, const SchemeConfig& cell_cfg, const CircuitSpec& spec,
                              const std::vector<std::uint64_t>& seeds, int jobs) {
    SchemeConfig pre = cell_cfg;
    pre.scheme = Scheme::GanNs;
    auto pretrained = run_seeds(pre, spec, cfg.bas, seeds, jobs);

    CellResult cell;
    cell.config = cell_cfg;
    for (auto& r : pretrained) {
        if (r.final_report().tv >= cfg.ft_min_tv) cell.pretrained.push_back(std::move(r));
    }
    cell.runs.resize(cell.pretrained.size());
    parallel_for(cell.pretrained.size(), jobs, [&](std::size_t i) {
        SchemeConfig ft = cell_cfg;
        ft.scheme = Scheme::FineTune;
        ft.lr_g = cfg.ft_lr_g;
        ft.iterations = cfg.ft_iterations;
        ft.batch_m = cfg.ft_batch_m;
        ft.exact_pstar = cfg.ft_exact_pstar;
        ft.root_seed = derive_seed(cell.pretrained[i].seed, {0xF7});
        cell.runs[i] = fine_tune(cell.pretrained[i], ft);
    });
    return cell;
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> CellResult::final_tv() const {
    std::vector<double> out;
    for (const auto& r : runs) out.push_back(r.final_report().tv);
    return out;
}

std::vector<double> CellResult::pretrained_tv() const {
    std::vector<double> out;
    for (const auto& r : pretrained) out.push_back(r.final_report().tv);
    return out;
}

std::vector<double> CellResult::median_mode_masses() const {
    if (runs.empty()) return {};
    const std::size_t modes = runs.front().final_report().mode_masses.size();
    std::vector<double> out;
    for (std::size_t j = 0; j < modes; ++j) {
        std::vector<double> col;
        for (const auto& r : runs) col.push_back(r.final_report().mode_masses[j]);
        out.push_back(median(col));
    }
    return out;
}

std::string CellResult::label() const {
    std::string s = scheme_name(config.scheme);
    if (config.scheme == Scheme::InterNsMcr2) s += "_a" + compact(config.alpha);
    s += "_m" + std::to_string(config.batch_m) + "_g" + compact(config.lr_g);
    if (scheme_head(config.scheme) || config.scheme == Scheme::FineTune) s += "_d" + compact(config.lr_d);
    return s;
}

std::vector<CellResult> run_experiment(const ExperimentConfig& cfg, int jobs, std::ostream* progress) {
    cfg.validate();
    const auto spec = CircuitSpec::ring(cfg.bas.n_qubits(), cfg.depth);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < cfg.n_seeds; ++s) seeds.push_back(cfg.run_seed(s));

    std::vector<CellResult> cells;
    for (double alpha : cfg.alphas) {
        for (int m : cfg.batch_sizes) {
            for (double g : cfg.lr_gs) {
                for (double d : cfg.lr_ds) {
                    SchemeConfig c = cfg.base;
                    c.alpha = alpha;
                    c.batch_m = m;
                    c.lr_g = g;
                    c.lr_d = d;
                    CellResult cell;
                    if (c.scheme == Scheme::FineTune) {
                        cell = run_fine_tune_cell(cfg, c, spec, seeds, jobs);
                    } else {
                        cell.config = c;
                        cell.runs = run_seeds(c, spec, cfg.bas, seeds, jobs);
                    }
                    if (!cell.runs.empty()) cell.band = aggregate_tv(cell.runs);
                    if (progress) {
                        *progress << cell.label() << ": " << cell.runs.size() << " runs, median final TV "
                                  << median(cell.final_tv()) << '\n';
                    }
                    cells.push_back(std::move(cell));
                }
            }
        }
    }
    return cells;
}

nlohmann::json summarize(const CellResult& cell) {
    const auto tvs = cell.final_tv();
    std::vector<double> invalid;
    for (const auto& r : cell.runs) invalid.push_back(r.final_report().invalid_mass);
    double sd = 0.0;
    if (!tvs.empty()) {
        const double mu = mean(tvs);
        for (double t : tvs) sd += (t - mu) * (t - mu);
        sd = std::sqrt(sd / static_cast<double>(tvs.size()));
    }
    nlohmann::json j = {
        {"label", cell.label()},
        {"scheme", scheme_name(cell.config.scheme)},
        {"alpha", cell.config.alpha},
        {"batch_m", cell.config.batch_m},
        {"lr_g", cell.config.lr_g},
        {"lr_d", cell.config.lr_d},
        {"runs", cell.runs.size()},
        {"mean_final_tv", tvs.empty() ? nlohmann::json(nullptr) : nlohmann::json(mean(tvs))},
        {"sd_final_tv", sd},
        {"median_final_tv", tvs.empty() ? nlohmann::json(nullptr) : nlohmann::json(median(tvs))},
        {"median_invalid_mass", invalid.empty() ? nlohmann::json(nullptr) : nlohmann::json(median(invalid))},
        {"median_mode_masses", cell.median_mode_masses()},
    };
    if (cell.config.scheme == Scheme::FineTune) {
        const auto before = cell.pretrained_tv();
        j["median_tv_before_fine_tune"] = before.empty() ? nlohmann::json(nullptr) : nlohmann::json(median(before));
    }
    return j;
}

void write_experiment(const ExperimentConfig& cfg, const std::vector<CellResult>& cells,
                      const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json all = nlohmann::json::array();
    std::ofstream csv(out_dir / "summary.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "summary.csv").string());
    csv << std::setprecision(10)
        << "scheme,alpha,batch_m,lr_g,lr_d,runs,mean_final_tv,sd_final_tv,median_final_tv,median_invalid_mass\n";
    for (const auto& cell : cells) {
        const auto dir = out_dir / cell.label();
        for (std::size_t i = 0; i < cell.runs.size(); ++i) {
            const auto run_dir = dir / ("seed_" + std::to_string(i));
            write_run(cell.runs[i], run_dir);
            if (cfg.dump_features && cell.runs[i].final_net) {
                auto net = *cell.runs[i].final_net;
                dump_features(net, cell.runs[i].spec, cell.runs[i].final_params, cfg.bas, run_dir / "features.csv",
                              cell.runs[i].seed);
            }
        }
        if (!cell.runs.empty()) write_band(cell.band, dir / "band.csv");
        const auto s = summarize(cell);
        all.push_back(s);
        auto num = [](const nlohmann::json& v) { return v.is_null() ? std::string("nan") : v.dump(); };
        csv << s["scheme"].get<std::string>() << ',' << cell.config.alpha << ',' << cell.config.batch_m << ','
            << cell.config.lr_g << ',' << cell.config.lr_d << ',' << cell.runs.size() << ',' << num(s["mean_final_tv"])
            << ',' << num(s["sd_final_tv"]) << ',' << num(s["median_final_tv"]) << ','
            << num(s["median_invalid_mass"]) << '\n';
    }
    std::ofstream js(out_dir / "summary.json");
    js << nlohmann::json{{"schema_version", 1}, {"cells", all}}.dump(2) << '\n';
}

std::filesystem::path resolve_output(const std::string& output_dir, const std::filesystem::path& fallback) {
    const std::filesystem::path dir(output_dir);
    if (dir.is_absolute()) return dir;
    const char* root = std::getenv("QCBM_OUTPUT_ROOT");
    return (root && *root ? std::filesystem::path(root) : fallback) / dir;
}

}  // namespace qcbm
