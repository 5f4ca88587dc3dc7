#include "qcbm/types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "qcbm/error.hpp"

namespace qcbm {

std::string BitString::to_string() const {
    std::string s(static_cast<std::size_t>(n_bits), '0');
    for (int q = 0; q < n_bits; ++q) {
        if (bit(q)) s[static_cast<std::size_t>(q)] = '1';
    }
    return s;
}

BitString BitString::parse(const std::string& text) {
    if (text.empty() || text.size() > 32) throw ConfigError("bitstring length must be in [1, 32]: '" + text + "'");
    BitString b{0, static_cast<int>(text.size())};
    for (char c : text) {
        if (c != '0' && c != '1') throw ConfigError("invalid bitstring character in '" + text + "'");
        b.value = (b.value << 1U) | static_cast<std::uint32_t>(c == '1');
    }
    return b;
}

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty() || !std::has_single_bit(probs_.size())) {
        throw ShapeError("distribution size must be a power of two");
    }
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0) throw NumericError("distribution entries must be finite and nonnegative");
    }
}

int DiscreteDistribution::n_bits() const { return std::countr_zero(probs_.size()); }

double DiscreteDistribution::total() const { return std::accumulate(probs_.begin(), probs_.end(), 0.0); }

WeightedOutcomes WeightedOutcomes::from_batch(const SampleBatch& batch) {
    if (batch.size() == 0) throw ShapeError("empty sample batch");
    WeightedOutcomes w{batch.n_bits, batch.outcomes, {}};
    w.weights.assign(batch.size(), 1.0 / static_cast<double>(batch.size()));
    return w;
}

WeightedOutcomes WeightedOutcomes::from_distribution(const DiscreteDistribution& dist) {
    WeightedOutcomes w{dist.n_bits(), {}, {}};
    w.outcomes.resize(dist.size());
    std::iota(w.outcomes.begin(), w.outcomes.end(), 0U);
    w.weights.assign(dist.probs().begin(), dist.probs().end());
    return w;
}

SampleBatch sample_distribution(const DiscreteDistribution& dist, int batch_size, Engine& engine) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<double> cdf(dist.size());
    std::partial_sum(dist.probs().begin(), dist.probs().end(), cdf.begin());
    const double total = cdf.back();
    SampleBatch batch{dist.n_bits(), {}};
    batch.outcomes.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const double u = uniform01(engine) * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        // u < total always, but rounding in the partial sums can leave trailing
        // zero-probability entries with cdf == total; never land on those.
        if (it == cdf.end()) it = std::prev(cdf.end());
        auto idx = static_cast<std::size_t>(it - cdf.begin());
        while (dist[idx] == 0.0 && idx > 0) --idx;
        batch.outcomes.push_back(static_cast<std::uint32_t>(idx));
    }
    return batch;
}

Eigen::MatrixXd bits_matrix(std::span<const std::uint32_t> outcomes, int n_bits) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(outcomes.size()), n_bits);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        for (int q = 0; q < n_bits; ++q) {
            m(static_cast<Eigen::Index>(i), q) = bit_at(outcomes[i], n_bits, q);
        }
    }
    return m;
}

DiscreteDistribution empirical_distribution(const SampleBatch& batch) {
    if (batch.size() == 0) throw ShapeError("empty sample batch");
    std::vector<double> freq(std::size_t{1} << batch.n_bits, 0.0);
    for (auto x : batch.outcomes) freq[x] += 1.0;
    for (double& f : freq) f /= static_cast<double>(batch.size());
    return DiscreteDistribution(std::move(freq));
}

}  // namespace qcbm
