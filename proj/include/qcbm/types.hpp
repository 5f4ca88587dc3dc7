#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcbm/rng.hpp"

namespace qcbm {

/// Bit ordering used everywhere: qubit 0 is the most significant bit of a
/// basis-state index, so index x reads as the base-2 string of x.
inline int bit_at(std::uint32_t value, int n_bits, int qubit) {
    return static_cast<int>((value >> (n_bits - 1 - qubit)) & 1U);
}

struct BitString {
    std::uint32_t value = 0;
    int n_bits = 0;

    [[nodiscard]] int bit(int qubit) const { return bit_at(value, n_bits, qubit); }
    [[nodiscard]] std::string to_string() const;
    static BitString parse(const std::string& text);

    friend bool operator==(const BitString&, const BitString&) = default;
};

/// Exact probability table over 2^n outcomes.
class DiscreteDistribution {
public:
    DiscreteDistribution() = default;
    explicit DiscreteDistribution(std::vector<double> probs);

    [[nodiscard]] std::size_t size() const { return probs_.size(); }
    [[nodiscard]] int n_bits() const;
    [[nodiscard]] double operator[](std::size_t i) const { return probs_[i]; }
    [[nodiscard]] std::span<const double> probs() const { return probs_; }
    [[nodiscard]] double total() const;

private:
    std::vector<double> probs_;
};

/// Classical measurement outcomes; each entry is a basis-state index.
struct SampleBatch {
    int n_bits = 0;
    std::vector<std::uint32_t> outcomes;

    [[nodiscard]] std::size_t size() const { return outcomes.size(); }
    [[nodiscard]] BitString at(std::size_t i) const { return {outcomes[i], n_bits}; }

    friend bool operator==(const SampleBatch&, const SampleBatch&) = default;
};

/// A finite measure over outcomes. Sample batches carry weight 1/m per draw;
/// exact tables carry p(x). Every expectation in the loss and gradient code is
/// a weighted sum over one of these, so sampled and exact modes share a path.
struct WeightedOutcomes {
    int n_bits = 0;
    std::vector<std::uint32_t> outcomes;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return outcomes.size(); }

    static WeightedOutcomes from_batch(const SampleBatch& batch);
    static WeightedOutcomes from_distribution(const DiscreteDistribution& dist);
};

/// Draws i.i.d. outcomes from a table by inverse-CDF lookup.
SampleBatch sample_distribution(const DiscreteDistribution& dist, int batch_size, Engine& engine);

/// Rows are samples, columns are pixels/qubits, entries in {0, 1}.
Eigen::MatrixXd bits_matrix(std::span<const std::uint32_t> outcomes, int n_bits);

/// Frequency table of a batch over 2^n outcomes.
DiscreteDistribution empirical_distribution(const SampleBatch& batch);

}  // namespace qcbm
