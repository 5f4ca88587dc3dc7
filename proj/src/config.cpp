#include "qcbm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "qcbm/error.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("expected a number, got '" + s + "'");
    return v;
}

long long to_integer(const std::string& s) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

template <class T, class F>
std::vector<T> to_list(const std::string& s, F&& convert) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) out.push_back(static_cast<T>(convert(item)));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

using Setter = void (*)(ExperimentConfig&, const std::string&);

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"scheme", [](ExperimentConfig& c, const std::string& v) { c.base.scheme = parse_scheme(v); }},
        {"bas", [](ExperimentConfig& c, const std::string& v) { c.bas = parse_bas_spec(v); }},
        {"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
        {"depth", [](ExperimentConfig& c, const std::string& v) { c.depth = static_cast<int>(to_integer(v)); }},
        {"alpha", [](ExperimentConfig& c, const std::string& v) { c.alphas = to_list<double>(v, to_double); }},
        {"batch_m", [](ExperimentConfig& c, const std::string& v) { c.batch_sizes = to_list<int>(v, to_integer); }},
        {"lr_g", [](ExperimentConfig& c, const std::string& v) { c.lr_gs = to_list<double>(v, to_double); }},
        {"lr_d", [](ExperimentConfig& c, const std::string& v) { c.lr_ds = to_list<double>(v, to_double); }},
        {"d_steps_per_g",
         [](ExperimentConfig& c, const std::string& v) { c.base.d_steps_per_g = static_cast<int>(to_integer(v)); }},
        {"iterations", [](ExperimentConfig& c, const std::string& v) { c.base.iterations = to_integer(v); }},
        {"exact_pstar", [](ExperimentConfig& c, const std::string& v) { c.base.exact_pstar = to_bool(v); }},
        {"eval_interval", [](ExperimentConfig& c, const std::string& v) { c.base.eval_interval = to_integer(v); }},
        {"bandwidths",
         [](ExperimentConfig& c, const std::string& v) { c.base.bandwidths = to_list<double>(v, to_double); }},
        {"eps_sq", [](ExperimentConfig& c, const std::string& v) { c.base.eps_sq = to_double(v); }},
        {"fresh_model_batch", [](ExperimentConfig& c, const std::string& v) { c.base.fresh_model_batch = to_bool(v); }},
        {"joint_batchnorm", [](ExperimentConfig& c, const std::string& v) { c.base.joint_batchnorm = to_bool(v); }},
        {"seeds", [](ExperimentConfig& c, const std::string& v) { c.n_seeds = static_cast<int>(to_integer(v)); }},
        {"root_seed",
         [](ExperimentConfig& c, const std::string& v) { c.root_seed = static_cast<std::uint64_t>(to_integer(v)); }},
        {"dump_features", [](ExperimentConfig& c, const std::string& v) { c.dump_features = to_bool(v); }},
        {"ft_lr_g", [](ExperimentConfig& c, const std::string& v) { c.ft_lr_g = to_double(v); }},
        {"ft_iterations", [](ExperimentConfig& c, const std::string& v) { c.ft_iterations = to_integer(v); }},
        {"ft_batch_m", [](ExperimentConfig& c, const std::string& v) { c.ft_batch_m = static_cast<int>(to_integer(v)); }},
        {"ft_exact_pstar", [](ExperimentConfig& c, const std::string& v) { c.ft_exact_pstar = to_bool(v); }},
        {"ft_min_tv", [](ExperimentConfig& c, const std::string& v) { c.ft_min_tv = to_double(v); }},
    };
    return table;
}

const char* const kRequired[] = {"scheme", "bas", "output_dir"};

}  // namespace

const std::vector<std::string>& experiment_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, set] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

std::uint64_t ExperimentConfig::run_seed(int index) const {
    return derive_seed(root_seed, {static_cast<std::uint64_t>(index)});
}

void ExperimentConfig::validate() const {
    bas.validate();
    CircuitSpec::ring(bas.n_qubits(), depth).validate();
    if (depth < 0) throw ConfigError("depth must be nonnegative");
    if (n_seeds < 1) throw ConfigError("seeds must be at least 1");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    SchemeConfig probe = base;
    for (double a : alphas) {
        probe.alpha = a;
        probe.validate();
    }
    for (int m : batch_sizes) {
        probe.batch_m = m;
        probe.validate();
    }
    for (double g : lr_gs) {
        probe.lr_g = g;
        probe.validate();
    }
    for (double d : lr_ds) {
        probe.lr_d = d;
        probe.validate();
    }
    if (base.scheme == Scheme::FineTune) {
        if (!(ft_lr_g > 0.0)) throw ConfigError("ft_lr_g must be positive");
        if (ft_iterations < 0) throw ConfigError("ft_iterations must be nonnegative");
        if (ft_batch_m < 1) throw ConfigError("ft_batch_m must be at least 1");
    }
}

ExperimentConfig parse_experiment(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no) + ": ";
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = setters();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
        if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (const auto prev = seen.find(key); prev != seen.end()) {
            throw ConfigError(where + "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) +
                              ")");
        }
        if (value.empty()) throw ConfigError(where + "key '" + key + "' has no value");
        seen.emplace(key, line_no);
        try {
            it->second(cfg, value);
        } catch (const Error& e) {
            throw ConfigError(where + key + ": " + e.what());
        }
    }
    for (const char* key : kRequired) {
        if (!seen.count(key)) throw ConfigError(origin + ": missing required key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str(), path.string());
}

}  // namespace qcbm
