#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "qcbm/rng.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

using Complex = std::complex<double>;

inline constexpr int kMaxQubits = 20;

enum class GateKind { RX, RY, RZ, CNOT };

struct GateOp {
    GateKind kind = GateKind::RY;
    int target = 0;
    std::optional<int> control;  // CNOT only
    double angle = 0.0;          // radians, rotations only

    static GateOp rx(int target, double angle) { return {GateKind::RX, target, std::nullopt, angle}; }
    static GateOp ry(int target, double angle) { return {GateKind::RY, target, std::nullopt, angle}; }
    static GateOp rz(int target, double angle) { return {GateKind::RZ, target, std::nullopt, angle}; }
    static GateOp cnot(int control, int target) { return {GateKind::CNOT, target, control, 0.0}; }
};

/// Row-major 2x2 matrix {u00, u01, u10, u11}.
using Matrix2 = std::array<Complex, 4>;

/// R_m(angle) = exp(-i angle sigma_m / 2) for m in {X, Y, Z}.
Matrix2 rotation_matrix(GateKind kind, double angle);

/// Dense n-qubit state. Gates are applied in place with stride arithmetic;
/// no 2^n x 2^n operator is ever formed.
class StateVector {
public:
    /// |0...0> on n qubits, 1 <= n <= kMaxQubits.
    explicit StateVector(int n_qubits);

    [[nodiscard]] int n_qubits() const { return n_qubits_; }
    [[nodiscard]] std::size_t dim() const { return amplitudes_.size(); }
    [[nodiscard]] const std::vector<Complex>& amplitudes() const { return amplitudes_; }
    [[nodiscard]] double norm() const;

    void apply(const GateOp& gate);

    /// Replace amplitudes wholesale; used by tests to prepare arbitrary states.
    void set_amplitudes(std::vector<Complex> amplitudes);

private:
    void apply_single(int target, const Matrix2& u);
    void apply_cnot(int control, int target);

    int n_qubits_;
    std::vector<Complex> amplitudes_;
};

StateVector init_zero_state(int n_qubits);

/// Returns a copy of `state` with `gate` applied.
StateVector apply_gate(StateVector state, const GateOp& gate);

/// Born-rule table |alpha_x|^2.
DiscreteDistribution probabilities(const StateVector& state);

/// Computational-basis measurement repeated batch_size times.
SampleBatch sample(const StateVector& state, int batch_size, std::uint64_t seed);

}  // namespace qcbm
