#include "qcbm/bas.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "qcbm/error.hpp"

namespace qcbm {

std::size_t BasSpec::mode_count() const {
    return (std::size_t{1} << height) + (std::size_t{1} << width) - 2;
}

void BasSpec::validate() const {
    if (height < 1 || width < 1) throw ConfigError("BAS height and width must be >= 1");
    if (height * width > 20) throw ConfigError("BAS h*w must be <= 20 to stay simulable");
}

BasSpec parse_bas_spec(const std::string& text) {
    const auto x = text.find_first_of("xX");
    if (x == std::string::npos) throw ConfigError("BAS geometry must look like HxW, got '" + text + "'");
    BasSpec spec;
    try {
        std::size_t used = 0;
        spec.height = std::stoi(text.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("h");
        const std::string w = text.substr(x + 1);
        spec.width = std::stoi(w, &used);
        if (used != w.size()) throw std::invalid_argument("w");
    } catch (const std::logic_error&) {
        throw ConfigError("BAS geometry must look like HxW, got '" + text + "'");
    }
    spec.validate();
    return spec;
}

bool is_valid_bas(const BitString& bits, const BasSpec& spec) {
    spec.validate();
    if (bits.n_bits != spec.n_qubits()) {
        throw ShapeError("bitstring length " + std::to_string(bits.n_bits) + " does not match " +
                         std::to_string(spec.height) + "x" + std::to_string(spec.width) + " image");
    }
    const int h = spec.height;
    const int w = spec.width;
    auto pixel = [&](int r, int c) { return bits.bit(r * w + c); };

    bool rows_constant = true;
    for (int r = 0; r < h && rows_constant; ++r) {
        for (int c = 1; c < w; ++c) {
            if (pixel(r, c) != pixel(r, 0)) {
                rows_constant = false;
                break;
            }
        }
    }
    if (rows_constant) return true;

    for (int c = 0; c < w; ++c) {
        for (int r = 1; r < h; ++r) {
            if (pixel(r, c) != pixel(0, c)) return false;
        }
    }
    return true;
}

std::vector<std::uint32_t> valid_patterns(const BasSpec& spec) {
    spec.validate();
    const int n = spec.n_qubits();
    std::vector<std::uint32_t> out;
    for (std::uint32_t x = 0; x < (std::uint32_t{1} << n); ++x) {
        if (is_valid_bas(BitString{x, n}, spec)) out.push_back(x);
    }
    return out;
}

DiscreteDistribution target_distribution(const BasSpec& spec) {
    const auto modes = valid_patterns(spec);
    std::vector<double> p(std::size_t{1} << spec.n_qubits(), 0.0);
    const double mass = 1.0 / static_cast<double>(modes.size());
    for (auto x : modes) p[x] = mass;
    return DiscreteDistribution(std::move(p));
}

SampleBatch sample_target(const BasSpec& spec, int batch_size, std::uint64_t seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const auto modes = valid_patterns(spec);
    auto engine = make_engine(seed);
    SampleBatch batch{spec.n_qubits(), {}};
    batch.outcomes.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        auto k = static_cast<std::size_t>(uniform01(engine) * static_cast<double>(modes.size()));
        if (k >= modes.size()) k = modes.size() - 1;
        batch.outcomes.push_back(modes[k]);
    }
    return batch;
}

void dump_dataset(const BasSpec& spec, const std::filesystem::path& stem) {
    const auto modes = valid_patterns(spec);
    auto txt = stem;
    txt += ".txt";
    std::ofstream out(txt);
    if (!out) throw IoError("cannot write " + txt.string());
    for (auto x : modes) out << BitString{x, spec.n_qubits()}.to_string() << '\n';

    auto js = stem;
    js += ".json";
    std::ofstream meta(js);
    if (!meta) throw IoError("cannot write " + js.string());
    nlohmann::json j = {{"schema_version", 1},
                        {"height", spec.height},
                        {"width", spec.width},
                        {"n_qubits", spec.n_qubits()},
                        {"pixel_order", "row-major, qubit 0 = most significant bit"},
                        {"n_bas", modes.size()}};
    meta << j.dump(2) << '\n';
}

}  // namespace qcbm
