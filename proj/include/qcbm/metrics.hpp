#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcbm/bas.hpp"
#include "qcbm/circuit.hpp"
#include "qcbm/neural.hpp"
#include "qcbm/types.hpp"

namespace qcbm {

/// 1/2 sum |p - q|
double total_variation(const DiscreteDistribution& p, const DiscreteDistribution& q);

struct EvalReport {
    double tv = 0.0;
    std::vector<double> mode_masses;  // ordered as valid_patterns()
    double invalid_mass = 0.0;
    long iteration = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Always against the exact simulator table.
EvalReport evaluate(const DiscreteDistribution& model, const BasSpec& bas, long iteration = 0);
EvalReport evaluate(const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas, long iteration = 0);

/// Diagnostic only: TV of the empirical frequencies of `shots` samples.
double sampled_tv(const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas, int shots, std::uint64_t seed);

/// CSV with columns x1,x2,source. Generated and real samples are drawn from
/// the circuit and the BAS target.
void dump_features(MlpNet& net, const CircuitSpec& spec, const ParamVector& params, const BasSpec& bas,
                   const std::filesystem::path& path, std::uint64_t seed, int per_source = 500);
void dump_features(MlpNet& net, const SampleBatch& gen, const SampleBatch& real, const std::filesystem::path& path);

}  // namespace qcbm
