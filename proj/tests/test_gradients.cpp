#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qcbm/bas.hpp"
#include "qcbm/error.hpp"
#include "qcbm/gradients.hpp"

using namespace qcbm;

namespace {

WeightedOutcomes model_measure(const CircuitSpec& spec, const std::vector<double>& theta) {
    return WeightedOutcomes::from_distribution(exact_distribution(spec, ParamVector(theta)));
}

// Central difference of loss(p_theta) at h = 1e-5.
template <class Loss>
std::vector<double> fd_gradient(const CircuitSpec& spec, const ParamVector& params, Loss&& loss) {
    const double h = 1e-5;
    std::vector<double> theta(params.values().begin(), params.values().end());
    std::vector<double> out(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) {
        const double keep = theta[k];
        theta[k] = keep + h;
        const double fp = loss(model_measure(spec, theta));
        theta[k] = keep - h;
        const double fm = loss(model_measure(spec, theta));
        theta[k] = keep;
        out[k] = (fp - fm) / (2 * h);
    }
    return out;
}

double max_abs(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Largest error relative to the gradient's own scale.
double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double err = 0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
    return err / std::max(max_abs(b), 1e-12);
}

GradOptions exact_opts() {
    GradOptions o;
    o.mode = Expectation::Exact;
    return o;
}

// Random target over 2^n outcomes.
WeightedOutcomes random_target(int n, std::uint64_t seed) {
    Engine engine(seed);
    std::vector<double> p(std::size_t{1} << n);
    double total = 0;
    for (auto& v : p) total += v = uniform01(engine) + 0.05;
    for (auto& v : p) v /= total;
    return WeightedOutcomes::from_distribution(DiscreteDistribution(p));
}

void jitter(MlpNet& net, std::uint64_t seed) {
    Eigen::VectorXd p = net.flat_params();
    Engine engine(seed);
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.5 * (uniform01(engine) - 0.5);
    net.set_flat_params(p);
}

MlpNet eval_net(Head head, int n, std::uint64_t seed) {
    auto net = head == Head::Scorer ? MlpNet::scorer(n, seed) : MlpNet::feature_mapper(n, seed);
    jitter(net, seed + 1000);
    // give the running statistics realistic values before freezing
    std::vector<std::uint32_t> all(std::size_t{1} << n);
    for (std::size_t x = 0; x < all.size(); ++x) all[x] = static_cast<std::uint32_t>(x);
    net.set_mode(Mode::Train);
    for (int i = 0; i < 20; ++i) net.forward(bits_matrix(all, n));
    net.set_mode(Mode::Eval);
    return net;
}

struct Stats {
    std::vector<double> mean;
    std::vector<double> se;
};

template <class Estimator>
Stats seed_stats(std::size_t dim, int seeds, Estimator&& est) {
    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
    for (int s = 0; s < seeds; ++s) {
        const auto g = est(static_cast<std::uint64_t>(s));
        for (std::size_t k = 0; k < dim; ++k) {
            sum[k] += g[k];
            sum_sq[k] += g[k] * g[k];
        }
    }
    Stats st{std::vector<double>(dim), std::vector<double>(dim)};
    for (std::size_t k = 0; k < dim; ++k) {
        st.mean[k] = sum[k] / seeds;
        const double var = (sum_sq[k] - seeds * st.mean[k] * st.mean[k]) / (seeds - 1);
        st.se[k] = std::sqrt(std::max(var, 0.0) / seeds);
    }
    return st;
}

void check_within_3se(const Stats& st, const std::vector<double>& exact) {
    for (std::size_t k = 0; k < exact.size(); ++k) {
        CHECK_MESSAGE(std::abs(st.mean[k] - exact[k]) <= 3 * st.se[k] + 1e-12,
                      "param " << k << " mean " << st.mean[k] << " exact " << exact[k] << " se " << st.se[k]);
    }
}

}  // namespace

TEST_CASE("exact-mode estimators equal finite differences of the exact losses") {
    const auto kernel = RbfKernel::default_bandwidths();
    const Mcr2Config cfg;
    for (int n : {2, 3, 4}) {
        for (std::uint64_t seed = 0; seed < 2; ++seed) {
            const auto spec = CircuitSpec::ring(n, 2);
            const auto params = random_params(spec, 40 + seed);
            const auto target = random_target(n, 7 + seed);
            CAPTURE(n);
            CAPTURE(seed);

            SUBCASE("MMD") {
                const auto bk = bit_rbf_kernel(kernel, n);
                const auto g = grad_mmd(spec, params, kernel, target, exact_opts()).grad;
                const auto fd = fd_gradient(spec, params, [&](const WeightedOutcomes& p) { return mmd_on(bk, p, target); });
                CHECK(g.size() == spec.num_params());
                CHECK(rel_error(g, fd) < 1e-5);
            }
            SUBCASE("non-saturating GAN") {
                auto net = eval_net(Head::Scorer, n, seed);
                const auto g = grad_gan_ns(spec, params, net, exact_opts()).grad;
                const auto fd = fd_gradient(spec, params, [&](const WeightedOutcomes& p) { return gan_g_loss_on(net, p); });
                CHECK(rel_error(g, fd) < 1e-5);
            }
            SUBCASE("MCR2 explicit features") {
                auto net = eval_net(Head::Scorer, n, seed);
                const auto g = grad_mcr2_explicit(spec, params, net, target, cfg, exact_opts()).grad;
                const auto fd =
                    fd_gradient(spec, params, [&](const WeightedOutcomes& p) { return mcr2_on(net, p, target, cfg); });
                CHECK(rel_error(g, fd) < 1e-5);
            }
            SUBCASE("MCR2 kernel form with the feature linear kernel") {
                auto net = eval_net(Head::Scorer, n, seed);
                const auto lin = feature_linear_kernel(net, n);
                const auto g = grad_mcr2_kernel(spec, params, lin, kFeatureDim, target, cfg, exact_opts()).grad;
                const auto fd =
                    fd_gradient(spec, params, [&](const WeightedOutcomes& p) { return mcr2_on(net, p, target, cfg); });
                CHECK(rel_error(g, fd) < 1e-5);
            }
            SUBCASE("deep-kernel MMD") {
                auto net = eval_net(Head::FeatureMapper, n, seed);
                const auto g = grad_deep_mmd(spec, params, net, kernel, target, exact_opts()).grad;
                const auto fd =
                    fd_gradient(spec, params, [&](const WeightedOutcomes& p) { return deep_mmd_on(net, kernel, p, target); });
                CHECK(rel_error(g, fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("explicit and kernel MCR2 gradients agree under the linear kernel") {
    const Mcr2Config cfg;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const int n = 4;
        const auto spec = CircuitSpec::ring(n, 3);
        const auto params = random_params(spec, seed);
        auto net = eval_net(Head::Scorer, n, seed + 3);
        const auto lin = feature_linear_kernel(net, n);
        for (Expectation mode : {Expectation::Exact, Expectation::Sampled}) {
            GradOptions opts;
            opts.mode = mode;
            opts.seed = 99 + seed;
            const auto real = mode == Expectation::Exact
                                  ? WeightedOutcomes::from_distribution(target_distribution({2, 2}))
                                  : WeightedOutcomes::from_batch(sample_target({2, 2}, 4, seed));
            const auto shifted = draw_shifted(spec, params, opts);
            const auto a = grad_mcr2_explicit(shifted, net, real, cfg).grad;
            const auto b = grad_mcr2_kernel(shifted, lin, kFeatureDim, real, cfg).grad;
            for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-8);
        }
    }
}

TEST_CASE("Woodbury identity against a direct inverse") {
    Engine engine(5);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd m(4, 7);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(engine) - 0.5;
        const double a = 0.3 + uniform01(engine);
        const Eigen::MatrixXd i4 = Eigen::MatrixXd::Identity(4, 4);
        const Eigen::MatrixXd i7 = Eigen::MatrixXd::Identity(7, 7);
        const Eigen::MatrixXd direct = (i4 + a * m * m.transpose()).inverse();
        const Eigen::MatrixXd wood = i4 - a * m * (i7 + a * m.transpose() * m).inverse() * m.transpose();
        CHECK((direct - wood).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("stationarity at the target") {
    const auto spec = CircuitSpec::ring(1, 0);
    const ParamVector params({std::numbers::pi / 2});
    const auto target = WeightedOutcomes::from_distribution(DiscreteDistribution({0.5, 0.5}));
    const auto g = grad_mmd(spec, params, RbfKernel::default_bandwidths(), target, exact_opts()).grad;
    REQUIRE(g.size() == 1);
    CHECK(std::abs(g[0]) < 1e-8);

    auto net = eval_net(Head::FeatureMapper, 1, 2);
    const auto gd = grad_deep_mmd(spec, params, net, RbfKernel::default_bandwidths(), target, exact_opts()).grad;
    CHECK(std::abs(gd[0]) < 1e-8);
}

TEST_CASE("a parameter without effect on p_theta has exactly zero exact-mode gradient") {
    // n=1, d=1: the last applied R_z (param index 1) only changes a phase.
    const auto spec = CircuitSpec::ring(1, 1);
    const ParamVector params({0.7, 1.3, -0.4, 2.1});
    const auto target = WeightedOutcomes::from_distribution(DiscreteDistribution({0.3, 0.7}));
    auto scorer = eval_net(Head::Scorer, 1, 4);
    auto mapper = eval_net(Head::FeatureMapper, 1, 4);
    const Mcr2Config cfg;
    CHECK(std::abs(grad_mmd(spec, params, RbfKernel::default_bandwidths(), target, exact_opts()).grad[1]) < 1e-15);
    CHECK(std::abs(grad_gan_ns(spec, params, scorer, exact_opts()).grad[1]) < 1e-15);
    CHECK(std::abs(grad_mcr2_explicit(spec, params, scorer, target, cfg, exact_opts()).grad[1]) < 1e-15);
    CHECK(std::abs(grad_deep_mmd(spec, params, mapper, RbfKernel::default_bandwidths(), target, exact_opts()).grad[1]) <
          1e-15);
}

TEST_CASE("constant discriminator gives zero GAN gradient in exact mode") {
    auto net = MlpNet::scorer(2, 1);
    Eigen::VectorXd p = net.flat_params();
    p.setZero();
    net.set_flat_params(p);
    net.set_mode(Mode::Eval);
    const auto spec = CircuitSpec::ring(2, 2);
    const auto g = grad_gan_ns(spec, random_params(spec, 3), net, exact_opts()).grad;
    for (double v : g) CHECK(std::abs(v) < 1e-15);  // rounding in sum(p+) - sum(p-)
}

TEST_CASE("GAN gradient sign: raising the probability of the preferred outcome lowers the loss") {
    // n=1, d=0: p(1) = sin^2(theta/2), increasing on (0, pi).
    const auto spec = CircuitSpec::ring(1, 0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto net = eval_net(Head::Scorer, 1, seed);
        const double d0 = net.forward(Eigen::MatrixXd::Zero(1, 1))(0, 0);
        const double d1 = net.forward(Eigen::MatrixXd::Ones(1, 1))(0, 0);
        const double g = grad_gan_ns(spec, ParamVector({1.0}), net, exact_opts()).grad[0];
        if (d1 > d0) CHECK(g < 0.0);
        if (d1 < d0) CHECK(g > 0.0);
    }
}

TEST_CASE("sampled estimators are unbiased with the exact target table") {
    const int n = 2;
    const auto spec = CircuitSpec::ring(n, 1);
    const auto params = random_params(spec, 21);
    const auto target = random_target(n, 5);
    const auto kernel = RbfKernel::default_bandwidths();
    const int seeds = 200;
    auto sampled = [](std::uint64_t s) {
        GradOptions o;
        o.seed = 1000 + s;
        return o;
    };

    SUBCASE("MMD") {
        const auto exact = grad_mmd(spec, params, kernel, target, exact_opts()).grad;
        check_within_3se(seed_stats(exact.size(), seeds,
                                    [&](std::uint64_t s) { return grad_mmd(spec, params, kernel, target, sampled(s)).grad; }),
                         exact);
    }
    SUBCASE("non-saturating GAN") {
        auto net = eval_net(Head::Scorer, n, 3);
        const auto exact = grad_gan_ns(spec, params, net, exact_opts()).grad;
        check_within_3se(
            seed_stats(exact.size(), seeds, [&](std::uint64_t s) { return grad_gan_ns(spec, params, net, sampled(s)).grad; }),
            exact);
    }
    SUBCASE("deep-kernel MMD") {
        auto net = eval_net(Head::FeatureMapper, n, 3);
        const auto exact = grad_deep_mmd(spec, params, net, kernel, target, exact_opts()).grad;
        check_within_3se(seed_stats(exact.size(), seeds,
                                    [&](std::uint64_t s) {
                                        return grad_deep_mmd(spec, params, net, kernel, target, sampled(s)).grad;
                                    }),
                         exact);
    }
}

TEST_CASE("deep-kernel MMD gradient is the MMD gradient under the feature kernel") {
    const int n = 3;
    const auto spec = CircuitSpec::ring(n, 2);
    const auto params = random_params(spec, 8);
    auto net = eval_net(Head::FeatureMapper, n, 8);
    const auto kernel = RbfKernel::default_bandwidths();
    const auto real = WeightedOutcomes::from_batch(SampleBatch{n, {1, 2, 7, 7}});
    GradOptions opts;
    opts.seed = 5;
    const auto s = draw_shifted(spec, params, opts);
    const auto a = grad_deep_mmd(s, net, kernel, real).grad;
    const auto b = grad_mmd(s, feature_rbf_kernel(net, kernel, n), real).grad;
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-14));
}

TEST_CASE("sampling bookkeeping and validation") {
    const auto spec = CircuitSpec::ring(2, 1);
    const auto params = random_params(spec, 1);
    GradOptions opts;
    opts.seed = 3;
    const auto s = draw_shifted(spec, params, opts);
    CHECK(s.model.size() == 1);
    CHECK(s.num_params() == spec.num_params());
    CHECK(s.batches_used == 1 + 2 * spec.num_params());
    CHECK(s.plus[0].size() == 4);

    opts.fresh_model_batch = true;
    CHECK(draw_shifted(spec, params, opts).model.size() == spec.num_params());

    GradOptions bad;
    bad.batch_m = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(draw_shifted(spec, params, exact_opts()).batches_used == 0);

    const Mcr2Config centered{0.5, false};
    auto net = eval_net(Head::Scorer, 2, 1);
    CHECK_THROWS_AS(grad_mcr2_explicit(spec, params, net, random_target(2, 1), centered, exact_opts()), ConfigError);
}
