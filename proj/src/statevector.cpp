#include "qcbm/statevector.hpp"

#include <cmath>
#include <string>

#include "qcbm/error.hpp"

namespace qcbm {

Matrix2 rotation_matrix(GateKind kind, double angle) {
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    const Complex i{0.0, 1.0};
    switch (kind) {
        case GateKind::RX:
            return {c, -i * s, -i * s, c};
        case GateKind::RY:
            return {c, -s, s, c};
        case GateKind::RZ:
            return {std::exp(-i * (angle / 2.0)), 0.0, 0.0, std::exp(i * (angle / 2.0))};
        case GateKind::CNOT:
            break;
    }
    throw ConfigError("rotation_matrix: CNOT is not a rotation");
}

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
        throw ConfigError("n_qubits must be in [1, " + std::to_string(kMaxQubits) + "], got " + std::to_string(n_qubits));
    }
    amplitudes_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
    amplitudes_[0] = 1.0;
}

double StateVector::norm() const {
    double s = 0.0;
    for (const auto& a : amplitudes_) s += std::norm(a);
    return std::sqrt(s);
}

void StateVector::set_amplitudes(std::vector<Complex> amplitudes) {
    if (amplitudes.size() != amplitudes_.size()) throw ShapeError("amplitude count must be 2^n_qubits");
    amplitudes_ = std::move(amplitudes);
}

void StateVector::apply(const GateOp& gate) {
    auto check_index = [&](int q, const char* what) {
        if (q < 0 || q >= n_qubits_) {
            throw ConfigError(std::string(what) + " qubit " + std::to_string(q) + " out of range for " +
                              std::to_string(n_qubits_) + " qubits");
        }
    };
    check_index(gate.target, "target");
    if (gate.kind == GateKind::CNOT) {
        if (!gate.control) throw ConfigError("CNOT requires a control qubit");
        check_index(*gate.control, "control");
        if (*gate.control == gate.target) throw ConfigError("CNOT control and target must differ");
        apply_cnot(*gate.control, gate.target);
        return;
    }
    if (!std::isfinite(gate.angle)) throw NumericError("non-finite rotation angle");
    apply_single(gate.target, rotation_matrix(gate.kind, gate.angle));
}

void StateVector::apply_single(int target, const Matrix2& u) {
    const std::size_t stride = std::size_t{1} << (n_qubits_ - 1 - target);
    const std::size_t n = amplitudes_.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
        for (std::size_t k = base; k < base + stride; ++k) {
            const Complex a0 = amplitudes_[k];
            const Complex a1 = amplitudes_[k + stride];
            amplitudes_[k] = u[0] * a0 + u[1] * a1;
            amplitudes_[k + stride] = u[2] * a0 + u[3] * a1;
        }
    }
}

void StateVector::apply_cnot(int control, int target) {
    const std::size_t cmask = std::size_t{1} << (n_qubits_ - 1 - control);
    const std::size_t tmask = std::size_t{1} << (n_qubits_ - 1 - target);
    for (std::size_t k = 0; k < amplitudes_.size(); ++k) {
        if ((k & cmask) && !(k & tmask)) std::swap(amplitudes_[k], amplitudes_[k | tmask]);
    }
}

StateVector init_zero_state(int n_qubits) { return StateVector(n_qubits); }

StateVector apply_gate(StateVector state, const GateOp& gate) {
    state.apply(gate);
    return state;
}

DiscreteDistribution probabilities(const StateVector& state) {
    std::vector<double> p(state.dim());
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(state.amplitudes()[k]);
    return DiscreteDistribution(std::move(p));
}

SampleBatch sample(const StateVector& state, int batch_size, std::uint64_t seed) {
    auto engine = make_engine(seed);
    return sample_distribution(probabilities(state), batch_size, engine);
}

}  // namespace qcbm
