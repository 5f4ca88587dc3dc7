#include "qcbm/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "qcbm/error.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q) {
    if (p.size() != q.size()) throw ShapeError("total_variation: distributions have different sizes");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
    return 0.5 * sum;
}

nlohmann::json EvalReport::to_json() const {
    return {{"schema_version", 1},
            {"iteration", iteration},
            {"tv", tv},
            {"invalid_mass", invalid_mass},
            {"mode_masses", mode_masses}};
}

EvalReport evaluate(const DiscreteDistribution& model, const BasSpec& bas, long iteration) {
    bas.validate();
    if (model.n_bits() != bas.n_qubits()) throw ShapeError("evaluate: qubit count does not match the BAS grid");
    EvalReport r;
    r.iteration = iteration;
    r.tv = total_variation(model, target_distribution(bas));
    double valid = 0.0;
    for (auto x : valid_patterns(bas)) {
        r.mode_masses.push_back(model[x]);
        valid += model[x];
    }
    r.invalid_mass = model.total() - valid;
    return r;
}

EvalReport evaluate(const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas, long iteration) {
    return evaluate(exact_distribution(spec, params), bas, iteration);
}

double sampled_tv(const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas, int shots, std::uint64_t seed) {
    const auto freq = empirical_distribution(generate(spec, params, shots, seed));
    return total_variation(freq, target_distribution(bas));
}

void dump_features(MlpNet& net, const SampleBatch& gen, const SampleBatch& real, const std::filesystem::path& path) {
    if (gen.n_bits != net.input_dim() || real.n_bits != net.input_dim()) {
        throw ShapeError("dump_features: batch width does not match the network input");
    }
    const Mode saved = net.mode();
    net.set_mode(Mode::Eval);
    const Eigen::MatrixXd fg = net.features(bits_matrix(gen.outcomes, gen.n_bits));
    const Eigen::MatrixXd fr = net.features(bits_matrix(real.outcomes, real.n_bits));
    net.set_mode(saved);

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17) << "x1,x2,source\n";
    for (Eigen::Index i = 0; i < fg.rows(); ++i) out << fg(i, 0) << ',' << fg(i, 1) << ",gen\n";
    for (Eigen::Index i = 0; i < fr.rows(); ++i) out << fr(i, 0) << ',' << fr(i, 1) << ",real\n";
    if (!out) throw IoError("write failed: " + path.string());
}

void dump_features(MlpNet& net, const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas,
                   const std::filesystem::path& path, std::uint64_t seed, int per_source) {
    const auto gen = generate(spec, params, per_source, derive_seed(seed, {1}));
    const auto real = sample_target(bas, per_source, derive_seed(seed, {2}));
    dump_features(net, gen, real, path);
}

}  // namespace qcbm
