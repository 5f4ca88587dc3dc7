#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "qcbm/statevector.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

/// Layout of the multilayer parameterized circuit: an initial R_y layer, then
/// `depth` blocks of (R_z R_x R_z per qubit, CNOT entanglement layer).
struct CircuitSpec {
    int n_qubits = 0;
    int depth = 0;
    std::vector<std::pair<int, int>> entanglement;  // (control, target), applied in order

    /// CNOT(j, j+1 mod n) for j = 0..n-1; empty for a single qubit.
    static CircuitSpec ring(int n_qubits, int depth);

    [[nodiscard]] std::size_t num_params() const {
        return static_cast<std::size_t>(3 * depth + 1) * static_cast<std::size_t>(n_qubits);
    }

    void validate() const;
};

/// Rotation angles. Index layout: [0, n) is the initial R_y layer; then block
/// l (0-based), qubit j occupies n + 3(l n + j) + {0, 1, 2} holding the angles
/// of R_z(a0) R_x(a1) R_z(a2). As an operator product the rightmost gate acts
/// first, so R_z(a2) is applied to the state before R_x(a1) and R_z(a0).
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<double> theta);

    [[nodiscard]] std::size_t size() const { return theta_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return theta_[i]; }
    [[nodiscard]] std::span<const double> values() const { return theta_; }
    [[nodiscard]] std::span<double> mutable_values() { return theta_; }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> theta_;
};

enum class Shift { Plus, Minus };

inline constexpr double kHalfPi = 1.57079632679489661923;

/// Uniform[0, 2 pi) angles.
ParamVector random_params(const CircuitSpec& spec, std::uint64_t seed);

std::vector<GateOp> build_circuit(const CircuitSpec& spec, const ParamVector& params);

StateVector evolve(const CircuitSpec& spec, const ParamVector& params);

DiscreteDistribution exact_distribution(const CircuitSpec& spec, const ParamVector& params);

SampleBatch generate(const CircuitSpec& spec, const ParamVector& params, int batch_size, std::uint64_t seed);

/// Copy of params with entry `index` moved by +/- pi/2.
ParamVector shifted_params(const ParamVector& params, std::size_t index, Shift direction);

// Text checkpoint: a header (format tag, layout version, n_qubits, depth,
// count) then one hexfloat per line, so values round-trip bit-exactly.
struct ParamCheckpoint {
    CircuitSpec spec;
    ParamVector params;
};

void save_params(const std::filesystem::path& path, const CircuitSpec& spec, const ParamVector& params);
ParamCheckpoint load_params(const std::filesystem::path& path);

}  // namespace qcbm
