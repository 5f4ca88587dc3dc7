#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace qcbm {

enum class Mode { Train, Eval };

/// Scorer: Linear(in,4)-BN-ReLU / Linear(4,4)-BN-ReLU / Linear(4,2)-BN / Linear(2,1)-Sigmoid.
/// FeatureMapper: the same trunk ending at the 2-unit BatchNorm.
enum class Head { Scorer, FeatureMapper };

inline constexpr int kFeatureDim = 2;

struct Linear {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
    Eigen::MatrixXd grad_weight;
    Eigen::VectorXd grad_bias;
};

struct BatchNorm {
    static constexpr double kMomentum = 0.1;
    static constexpr double kEps = 1e-5;

    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
    Eigen::VectorXd grad_gamma;
    Eigen::VectorXd grad_beta;
};

struct Relu {};
struct Sigmoid {};

using Layer = std::variant<Linear, BatchNorm, Relu, Sigmoid>;

/// Everything backward() needs from one forward pass. Several tapes may be
/// alive at once (e.g. separate passes over real and generated batches).
struct Tape {
    Mode mode = Mode::Eval;
    std::vector<Eigen::MatrixXd> inputs;    // input of each executed layer
    std::vector<Eigen::MatrixXd> outputs;   // output of each executed layer
    std::vector<Eigen::VectorXd> inv_std;   // BatchNorm layers only, else empty
    std::vector<Eigen::MatrixXd> xhat;      // BatchNorm normalized input, else empty

    [[nodiscard]] bool empty() const { return inputs.empty(); }
};

/// Small feed-forward net with hand-written reverse mode. Inputs are one
/// sample per row.
class MlpNet {
public:
    static MlpNet scorer(int input_dim, std::uint64_t seed);
    static MlpNet feature_mapper(int input_dim, std::uint64_t seed);

    [[nodiscard]] Head head() const { return head_; }
    [[nodiscard]] int input_dim() const { return input_dim_; }
    [[nodiscard]] Mode mode() const { return mode_; }
    void set_mode(Mode mode) { mode_ = mode; }

    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }

    /// Full network output: m x 1 scores in (0,1) for a scorer, m x 2
    /// features for a feature mapper. Train mode updates running statistics.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr);

    /// Output of the 2-unit BatchNorm (the penultimate layer of a scorer).
    Eigen::MatrixXd features(const Eigen::MatrixXd& x, Tape* tape = nullptr);

    /// Accumulates parameter gradients for the recorded pass and returns the
    /// gradient with respect to the input.
    Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& grad_output);

    [[nodiscard]] std::size_t num_params() const;
    [[nodiscard]] Eigen::VectorXd flat_params() const;
    void set_flat_params(const Eigen::VectorXd& flat);
    [[nodiscard]] Eigen::VectorXd flat_grads() const;
    void zero_grad();

    void save(const std::filesystem::path& path) const;
    static MlpNet load(const std::filesystem::path& path);

private:
    MlpNet(Head head, int input_dim) : head_(head), input_dim_(input_dim) {}
    static MlpNet build(Head head, int input_dim, std::uint64_t seed);

    Eigen::MatrixXd run(const Eigen::MatrixXd& x, std::size_t depth, Tape* tape);
    [[nodiscard]] std::size_t feature_depth() const { return 8; }

    Head head_;
    int input_dim_;
    Mode mode_ = Mode::Train;
    std::vector<Layer> layers_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are sized on the first step and
/// every later step must present the same parameter count.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::span<double> params, std::span<const double> grads);

    [[nodiscard]] long steps() const { return t_; }
    [[nodiscard]] const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    std::vector<double> m_;
    std::vector<double> v_;
    long t_ = 0;
};

/// Adam step on an MlpNet using its accumulated gradients (descent).
void adam_step(MlpNet& net, Adam& opt);

}  // namespace qcbm
