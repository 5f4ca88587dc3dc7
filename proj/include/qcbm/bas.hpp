#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qcbm/types.hpp"

namespace qcbm {

/// Bars-and-Stripes image geometry. Pixel (r, c) is qubit r*w + c (row-major);
/// bit 1 means the pixel is on.
struct BasSpec {
    int height = 0;
    int width = 0;

    [[nodiscard]] int n_qubits() const { return height * width; }
    /// 2^h + 2^w - 2
    [[nodiscard]] std::size_t mode_count() const;
    void validate() const;

    friend bool operator==(const BasSpec&, const BasSpec&) = default;
};

/// Parses "HxW" (e.g. "2x3").
BasSpec parse_bas_spec(const std::string& text);

bool is_valid_bas(const BitString& bits, const BasSpec& spec);

/// Valid patterns in increasing basis-index order.
std::vector<std::uint32_t> valid_patterns(const BasSpec& spec);

DiscreteDistribution target_distribution(const BasSpec& spec);

SampleBatch sample_target(const BasSpec& spec, int batch_size, std::uint64_t seed);

/// Writes `stem`.txt (one bitstring per line, every valid pattern) and
/// `stem`.json (geometry and N_BAS).
void dump_dataset(const BasSpec& spec, const std::filesystem::path& stem);

}  // namespace qcbm
