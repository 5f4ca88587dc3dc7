#include "qcbm/circuit.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "qcbm/error.hpp"

namespace qcbm {

namespace {

constexpr int kLayoutVersion = 1;
constexpr const char* kParamsTag = "qcbm-params";

}  // namespace

CircuitSpec CircuitSpec::ring(int n_qubits, int depth) {
    CircuitSpec spec{n_qubits, depth, {}};
    if (n_qubits >= 2) {
        for (int j = 0; j < n_qubits; ++j) spec.entanglement.emplace_back(j, (j + 1) % n_qubits);
    }
    spec.validate();
    return spec;
}

void CircuitSpec::validate() const {
    if (n_qubits < 1 || n_qubits > kMaxQubits) throw ConfigError("circuit n_qubits out of range: " + std::to_string(n_qubits));
    if (depth < 0) throw ConfigError("circuit depth must be >= 0");
    for (const auto& [c, t] : entanglement) {
        if (c < 0 || t < 0 || c >= n_qubits || t >= n_qubits || c == t) {
            throw ConfigError("invalid entanglement pair (" + std::to_string(c) + ", " + std::to_string(t) + ")");
        }
    }
}

ParamVector::ParamVector(std::vector<double> theta) : theta_(std::move(theta)) {
    for (double t : theta_) {
        if (!std::isfinite(t)) throw NumericError("circuit parameters must be finite");
    }
}

ParamVector random_params(const CircuitSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto engine = make_engine(seed);
    std::vector<double> theta(spec.num_params());
    for (double& t : theta) t = 2.0 * std::numbers::pi * uniform01(engine);
    return ParamVector(std::move(theta));
}

std::vector<GateOp> build_circuit(const CircuitSpec& spec, const ParamVector& params) {
    spec.validate();
    if (params.size() != spec.num_params()) {
        throw ShapeError("parameter count " + std::to_string(params.size()) + " does not match circuit (" +
                         std::to_string(spec.num_params()) + ")");
    }
    const int n = spec.n_qubits;
    std::vector<GateOp> gates;
    gates.reserve(params.size() + static_cast<std::size_t>(spec.depth) * spec.entanglement.size());
    for (int j = 0; j < n; ++j) gates.push_back(GateOp::ry(j, params[static_cast<std::size_t>(j)]));
    for (int l = 0; l < spec.depth; ++l) {
        for (int j = 0; j < n; ++j) {
            const auto base = static_cast<std::size_t>(n + 3 * (l * n + j));
            gates.push_back(GateOp::rz(j, params[base + 2]));
            gates.push_back(GateOp::rx(j, params[base + 1]));
            gates.push_back(GateOp::rz(j, params[base]));
        }
        for (const auto& [c, t] : spec.entanglement) gates.push_back(GateOp::cnot(c, t));
    }
    return gates;
}

StateVector evolve(const CircuitSpec& spec, const ParamVector& params) {
    StateVector state(spec.n_qubits);
    for (const auto& g : build_circuit(spec, params)) state.apply(g);
    return state;
}

DiscreteDistribution exact_distribution(const CircuitSpec& spec, const ParamVector& params) {
    return probabilities(evolve(spec, params));
}

SampleBatch generate(const CircuitSpec& spec, const ParamVector& params, int batch_size, std::uint64_t seed) {
    return sample(evolve(spec, params), batch_size, seed);
}

ParamVector shifted_params(const ParamVector& params, std::size_t index, Shift direction) {
    if (index >= params.size()) {
        throw ConfigError("shift index " + std::to_string(index) + " out of range (" + std::to_string(params.size()) + ")");
    }
    ParamVector out = params;
    out.mutable_values()[index] += direction == Shift::Plus ? kHalfPi : -kHalfPi;
    return out;
}

void save_params(const std::filesystem::path& path, const CircuitSpec& spec, const ParamVector& params) {
    if (params.size() != spec.num_params()) throw ShapeError("checkpoint parameter count mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << kParamsTag << ' ' << kLayoutVersion << '\n'
        << "n_qubits " << spec.n_qubits << '\n'
        << "depth " << spec.depth << '\n'
        << "entanglement";
    for (const auto& [c, t] : spec.entanglement) out << ' ' << c << ':' << t;
    out << '\n' << "count " << params.size() << '\n' << std::hexfloat;
    for (double v : params.values()) out << v << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

ParamCheckpoint load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    auto fail = [&](const std::string& why) -> IoError { return IoError("corrupt checkpoint " + path.string() + ": " + why); };

    std::string tag;
    int version = 0;
    if (!(in >> tag >> version) || tag != kParamsTag) throw fail("missing header");
    if (version != kLayoutVersion) throw fail("unsupported layout version " + std::to_string(version));

    std::string key;
    CircuitSpec spec;
    std::size_t count = 0;
    if (!(in >> key >> spec.n_qubits) || key != "n_qubits") throw fail("expected n_qubits");
    if (!(in >> key >> spec.depth) || key != "depth") throw fail("expected depth");
    if (!(in >> key) || key != "entanglement") throw fail("expected entanglement");
    std::string line;
    std::getline(in, line);
    std::istringstream pairs(line);
    std::string pair;
    while (pairs >> pair) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos) throw fail("bad entanglement pair '" + pair + "'");
        spec.entanglement.emplace_back(std::stoi(pair.substr(0, colon)), std::stoi(pair.substr(colon + 1)));
    }
    if (!(in >> key >> count) || key != "count") throw fail("expected count");
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw fail(e.what());
    }
    if (count != spec.num_params()) throw fail("count does not match (3d+1)n");

    std::vector<double> theta;
    theta.reserve(count);
    std::string token;
    while (theta.size() < count && in >> token) {
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') throw fail("bad value '" + token + "'");
        theta.push_back(v);
    }
    if (theta.size() != count) throw fail("truncated parameter list");
    if (in >> token) throw fail("trailing data");
    try {
        return {spec, ParamVector(std::move(theta))};
    } catch (const NumericError& e) {
        throw fail(e.what());
    }
}

}  // namespace qcbm
