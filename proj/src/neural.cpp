#include "qcbm/neural.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "qcbm/error.hpp"
#include "qcbm/rng.hpp"

namespace qcbm {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Linear make_linear(int in, int out, Engine& engine) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = bound * (2.0 * uniform01(engine) - 1.0);
    }
    l.bias = Eigen::VectorXd::Zero(out);
    l.grad_weight = Eigen::MatrixXd::Zero(out, in);
    l.grad_bias = Eigen::VectorXd::Zero(out);
    return l;
}

BatchNorm make_batchnorm(int dim) {
    BatchNorm bn;
    bn.gamma = Eigen::VectorXd::Ones(dim);
    bn.beta = Eigen::VectorXd::Zero(dim);
    bn.running_mean = Eigen::VectorXd::Zero(dim);
    bn.running_var = Eigen::VectorXd::Ones(dim);
    bn.grad_gamma = Eigen::VectorXd::Zero(dim);
    bn.grad_beta = Eigen::VectorXd::Zero(dim);
    return bn;
}

// Visits every trainable block in a fixed order: weight, bias, gamma, beta.
template <class Net, class F>
void for_each_param(Net& layers, F&& f) {
    for (auto& layer : layers) {
        if (auto* l = std::get_if<Linear>(&layer)) {
            f(l->weight.data(), l->grad_weight.data(), l->weight.size());
            f(l->bias.data(), l->grad_bias.data(), l->bias.size());
        } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
            f(bn->gamma.data(), bn->grad_gamma.data(), bn->gamma.size());
            f(bn->beta.data(), bn->grad_beta.data(), bn->beta.size());
        }
    }
}

}  // namespace

MlpNet MlpNet::build(Head head, int input_dim, std::uint64_t seed) {
    if (input_dim < 1) throw ConfigError("network input_dim must be >= 1");
    auto engine = make_engine(seed);
    MlpNet net(head, input_dim);
    net.layers_.emplace_back(make_linear(input_dim, 4, engine));
    net.layers_.emplace_back(make_batchnorm(4));
    net.layers_.emplace_back(Relu{});
    net.layers_.emplace_back(make_linear(4, 4, engine));
    net.layers_.emplace_back(make_batchnorm(4));
    net.layers_.emplace_back(Relu{});
    net.layers_.emplace_back(make_linear(4, kFeatureDim, engine));
    net.layers_.emplace_back(make_batchnorm(kFeatureDim));
    if (head == Head::Scorer) {
        net.layers_.emplace_back(make_linear(kFeatureDim, 1, engine));
        net.layers_.emplace_back(Sigmoid{});
    }
    return net;
}

MlpNet MlpNet::scorer(int input_dim, std::uint64_t seed) { return build(Head::Scorer, input_dim, seed); }

MlpNet MlpNet::feature_mapper(int input_dim, std::uint64_t seed) { return build(Head::FeatureMapper, input_dim, seed); }

Eigen::MatrixXd MlpNet::forward(const Eigen::MatrixXd& x, Tape* tape) { return run(x, layers_.size(), tape); }

Eigen::MatrixXd MlpNet::features(const Eigen::MatrixXd& x, Tape* tape) { return run(x, feature_depth(), tape); }

Eigen::MatrixXd MlpNet::run(const Eigen::MatrixXd& x, std::size_t depth, Tape* tape) {
    if (x.cols() != input_dim_) {
        throw ShapeError("network input width " + std::to_string(x.cols()) + " != " + std::to_string(input_dim_));
    }
    if (x.rows() < 1) throw ShapeError("network input batch is empty");
    if (tape) {
        *tape = Tape{};
        tape->mode = mode_;
    }
    Eigen::MatrixXd h = x;
    for (std::size_t i = 0; i < depth; ++i) {
        Eigen::VectorXd inv_std;
        Eigen::MatrixXd xhat;
        Eigen::MatrixXd out = std::visit(
            Overloaded{
                [&](const Linear& l) -> Eigen::MatrixXd {
                    return (h * l.weight.transpose()).rowwise() + l.bias.transpose();
                },
                [&](BatchNorm& bn) -> Eigen::MatrixXd {
                    Eigen::RowVectorXd mean;
                    Eigen::RowVectorXd var;
                    if (mode_ == Mode::Train) {
                        const auto m = static_cast<double>(h.rows());
                        mean = h.colwise().mean();
                        var = (h.rowwise() - mean).array().square().colwise().sum() / m;
                        bn.running_mean = (1.0 - BatchNorm::kMomentum) * bn.running_mean + BatchNorm::kMomentum * mean.transpose();
                        if (h.rows() > 1) {
                            const Eigen::VectorXd unbiased = var.transpose() * (m / (m - 1.0));
                            bn.running_var = (1.0 - BatchNorm::kMomentum) * bn.running_var + BatchNorm::kMomentum * unbiased;
                        }
                    } else {
                        mean = bn.running_mean.transpose();
                        var = bn.running_var.transpose();
                    }
                    inv_std = (var.array() + BatchNorm::kEps).rsqrt().transpose();
                    xhat = (h.rowwise() - mean).array().rowwise() * inv_std.transpose().array();
                    return (xhat.array().rowwise() * bn.gamma.transpose().array()).rowwise() + bn.beta.transpose().array();
                },
                [&](const Relu&) -> Eigen::MatrixXd { return h.cwiseMax(0.0); },
                [&](const Sigmoid&) -> Eigen::MatrixXd { return (1.0 + (-h.array()).exp()).inverse().matrix(); },
            },
            layers_[i]);
        if (tape) {
            tape->inputs.push_back(h);
            tape->outputs.push_back(out);
            tape->inv_std.push_back(std::move(inv_std));
            tape->xhat.push_back(std::move(xhat));
        }
        h = std::move(out);
    }
    return h;
}

Eigen::MatrixXd MlpNet::backward(const Tape& tape, const Eigen::MatrixXd& grad_output) {
    if (tape.empty()) throw ConfigError("backward called before forward");
    if (grad_output.rows() != tape.outputs.back().rows() || grad_output.cols() != tape.outputs.back().cols()) {
        throw ShapeError("upstream gradient shape does not match the recorded output");
    }
    Eigen::MatrixXd g = grad_output;
    for (std::size_t k = tape.inputs.size(); k-- > 0;) {
        const Eigen::MatrixXd& in = tape.inputs[k];
        const Eigen::MatrixXd& out = tape.outputs[k];
        g = std::visit(
            Overloaded{
                [&](Linear& l) -> Eigen::MatrixXd {
                    l.grad_weight += g.transpose() * in;
                    l.grad_bias += g.colwise().sum().transpose();
                    return g * l.weight;
                },
                [&](BatchNorm& bn) -> Eigen::MatrixXd {
                    const Eigen::VectorXd& inv_std = tape.inv_std[k];
                    const Eigen::MatrixXd& xhat = tape.xhat[k];
                    bn.grad_gamma += (g.array() * xhat.array()).colwise().sum().transpose().matrix();
                    bn.grad_beta += g.colwise().sum().transpose();
                    const Eigen::MatrixXd dxhat = g.array().rowwise() * bn.gamma.transpose().array();
                    if (tape.mode == Mode::Eval) {
                        return dxhat.array().rowwise() * inv_std.transpose().array();
                    }
                    const auto m = static_cast<double>(in.rows());
                    const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
                    const Eigen::RowVectorXd sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
                    Eigen::MatrixXd dx = (m * dxhat.array()).matrix().rowwise() - sum_d;
                    dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
                    return (dx.array().rowwise() * (inv_std.transpose().array() / m)).matrix();
                },
                [&](const Relu&) -> Eigen::MatrixXd { return (in.array() > 0.0).cast<double>() * g.array(); },
                [&](const Sigmoid&) -> Eigen::MatrixXd { return g.array() * out.array() * (1.0 - out.array()); },
            },
            layers_[k]);
    }
    return g;
}

std::size_t MlpNet::num_params() const {
    std::size_t n = 0;
    for_each_param(layers_, [&](const double*, const double*, Eigen::Index size) { n += static_cast<std::size_t>(size); });
    return n;
}

Eigen::VectorXd MlpNet::flat_params() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(num_params()));
    Eigen::Index pos = 0;
    for_each_param(layers_, [&](const double* p, const double*, Eigen::Index size) {
        flat.segment(pos, size) = Eigen::Map<const Eigen::VectorXd>(p, size);
        pos += size;
    });
    return flat;
}

void MlpNet::set_flat_params(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != num_params()) throw ShapeError("flat parameter vector has wrong length");
    Eigen::Index pos = 0;
    for_each_param(layers_, [&](double* p, double*, Eigen::Index size) {
        Eigen::Map<Eigen::VectorXd>(p, size) = flat.segment(pos, size);
        pos += size;
    });
}

Eigen::VectorXd MlpNet::flat_grads() const {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(num_params()));
    Eigen::Index pos = 0;
    for_each_param(layers_, [&](const double*, const double* g, Eigen::Index size) {
        flat.segment(pos, size) = Eigen::Map<const Eigen::VectorXd>(g, size);
        pos += size;
    });
    return flat;
}

void MlpNet::zero_grad() {
    for_each_param(layers_, [](double*, double* g, Eigen::Index size) { Eigen::Map<Eigen::VectorXd>(g, size).setZero(); });
}

namespace {

constexpr const char* kNetTag = "qcbm-mlp";
constexpr int kNetVersion = 1;

void write_values(std::ostream& out, const double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) out << (i ? " " : "") << data[i];
    out << '\n';
}

void read_values(std::istream& in, double* data, Eigen::Index size, const std::string& where) {
    std::string token;
    for (Eigen::Index i = 0; i < size; ++i) {
        if (!(in >> token)) throw IoError("corrupt network checkpoint: truncated " + where);
        char* end = nullptr;
        data[i] = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') throw IoError("corrupt network checkpoint: bad value in " + where);
    }
}

}  // namespace

void MlpNet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << kNetTag << ' ' << kNetVersion << '\n'
        << "head " << (head_ == Head::Scorer ? "scorer" : "feature_mapper") << '\n'
        << "input_dim " << input_dim_ << '\n'
        << "layers " << layers_.size() << '\n'
        << std::hexfloat;
    for (const auto& layer : layers_) {
        std::visit(Overloaded{
                       [&](const Linear& l) {
                           out << "linear " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
                           const Eigen::MatrixXd w = l.weight;  // column-major storage
                           write_values(out, w.data(), w.size());
                           write_values(out, l.bias.data(), l.bias.size());
                       },
                       [&](const BatchNorm& bn) {
                           out << "batchnorm " << bn.gamma.size() << '\n';
                           write_values(out, bn.gamma.data(), bn.gamma.size());
                           write_values(out, bn.beta.data(), bn.beta.size());
                           write_values(out, bn.running_mean.data(), bn.running_mean.size());
                           write_values(out, bn.running_var.data(), bn.running_var.size());
                       },
                       [&](const Relu&) { out << "relu\n"; },
                       [&](const Sigmoid&) { out << "sigmoid\n"; },
                   },
                   layer);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

MlpNet MlpNet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open network checkpoint " + path.string());
    std::string tag;
    std::string key;
    std::string head_name;
    int version = 0;
    int input_dim = 0;
    std::size_t count = 0;
    if (!(in >> tag >> version) || tag != kNetTag || version != kNetVersion) throw IoError("corrupt network checkpoint: header");
    if (!(in >> key >> head_name) || key != "head") throw IoError("corrupt network checkpoint: head");
    if (!(in >> key >> input_dim) || key != "input_dim") throw IoError("corrupt network checkpoint: input_dim");
    if (!(in >> key >> count) || key != "layers") throw IoError("corrupt network checkpoint: layers");
    Head head;
    if (head_name == "scorer") {
        head = Head::Scorer;
    } else if (head_name == "feature_mapper") {
        head = Head::FeatureMapper;
    } else {
        throw IoError("corrupt network checkpoint: unknown head " + head_name);
    }
    MlpNet net = build(head, input_dim, 0);
    if (count != net.layers_.size()) throw IoError("corrupt network checkpoint: layer count");
    for (std::size_t i = 0; i < count; ++i) {
        std::string kind;
        if (!(in >> kind)) throw IoError("corrupt network checkpoint: truncated");
        const std::string where = "layer " + std::to_string(i);
        std::visit(Overloaded{
                       [&](Linear& l) {
                           Eigen::Index rows = 0;
                           Eigen::Index cols = 0;
                           if (kind != "linear" || !(in >> rows >> cols) || rows != l.weight.rows() || cols != l.weight.cols()) {
                               throw IoError("corrupt network checkpoint: shape mismatch at " + where);
                           }
                           read_values(in, l.weight.data(), l.weight.size(), where);
                           read_values(in, l.bias.data(), l.bias.size(), where);
                       },
                       [&](BatchNorm& bn) {
                           Eigen::Index dim = 0;
                           if (kind != "batchnorm" || !(in >> dim) || dim != bn.gamma.size()) {
                               throw IoError("corrupt network checkpoint: shape mismatch at " + where);
                           }
                           read_values(in, bn.gamma.data(), dim, where);
                           read_values(in, bn.beta.data(), dim, where);
                           read_values(in, bn.running_mean.data(), dim, where);
                           read_values(in, bn.running_var.data(), dim, where);
                       },
                       [&](Relu&) {
                           if (kind != "relu") throw IoError("corrupt network checkpoint: expected relu at " + where);
                       },
                       [&](Sigmoid&) {
                           if (kind != "sigmoid") throw IoError("corrupt network checkpoint: expected sigmoid at " + where);
                       },
                   },
                   net.layers_[i]);
    }
    return net;
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: parameter and gradient lengths differ");
    if (t_ == 0) {
        m_.assign(params.size(), 0.0);
        v_.assign(params.size(), 0.0);
    } else if (m_.size() != params.size()) {
        throw ShapeError("Adam: parameter count changed between steps");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
        const double m_hat = m_[i] / bc1;
        const double v_hat = v_[i] / bc2;
        params[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
}

void adam_step(MlpNet& net, Adam& opt) {
    Eigen::VectorXd params = net.flat_params();
    const Eigen::VectorXd grads = net.flat_grads();
    opt.step(std::span<double>(params.data(), static_cast<std::size_t>(params.size())),
             std::span<const double>(grads.data(), static_cast<std::size_t>(grads.size())));
    net.set_flat_params(params);
}

}  // namespace qcbm
