#include <doctest.h>

#include <cmath>

#include "qcbm/error.hpp"
#include "qcbm/losses.hpp"
#include "qcbm/rng.hpp"

using namespace qcbm;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Engine engine(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(engine) - 1.0;
    return m;
}

double logdet_eig(const Eigen::MatrixXd& a) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    return eig.eigenvalues().array().log().sum();
}

// Samples as rows; second moments Z^T Z / m.
double delta_r_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double eps_sq) {
    const double d = static_cast<double>(x.cols());
    const double m = static_cast<double>(x.rows());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(x.cols(), x.cols());
    const Eigen::MatrixXd xx = x.transpose() * x;
    const Eigen::MatrixXd yy = y.transpose() * y;
    return 0.5 * logdet_eig(id + d / (2 * m * eps_sq) * (xx + yy)) - 0.25 * logdet_eig(id + d / (m * eps_sq) * xx) -
           0.25 * logdet_eig(id + d / (m * eps_sq) * yy);
}

double mmd_double_loop(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double aa = 0, ab = 0, bb = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
            double sq = 0;
            for (Eigen::Index c = 0; c < a.cols(); ++c) sq += (a(i, c) - a(j, c)) * (a(i, c) - a(j, c));
            double s = 0;
            for (double sigma : k.bandwidths()) s += std::exp(-sq / (2 * sigma));
            aa += s / static_cast<double>(k.bandwidths().size());
        }
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double sq = 0;
            for (Eigen::Index c = 0; c < a.cols(); ++c) sq += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
            double s = 0;
            for (double sigma : k.bandwidths()) s += std::exp(-sq / (2 * sigma));
            ab += s / static_cast<double>(k.bandwidths().size());
        }
    }
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            double sq = 0;
            for (Eigen::Index c = 0; c < b.cols(); ++c) sq += (b(i, c) - b(j, c)) * (b(i, c) - b(j, c));
            double s = 0;
            for (double sigma : k.bandwidths()) s += std::exp(-sq / (2 * sigma));
            bb += s / static_cast<double>(k.bandwidths().size());
        }
    }
    const double ma = static_cast<double>(a.rows()), mb = static_cast<double>(b.rows());
    return aa / (ma * ma) - 2 * ab / (ma * mb) + bb / (mb * mb);
}

template <class F>
Eigen::MatrixXd fd_grad(Eigen::MatrixXd z, F&& f) {
    const double h = 1e-6;
    Eigen::MatrixXd g(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double keep = z.data()[i];
        z.data()[i] = keep + h;
        const double fp = f(z);
        z.data()[i] = keep - h;
        const double fm = f(z);
        z.data()[i] = keep;
        g.data()[i] = (fp - fm) / (2 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("MMD examples") {
    const auto k = RbfKernel::default_bandwidths();
    const auto a = random_matrix(4, 3, 1);
    CHECK(std::abs(mmd_loss(k, a, a)) < 1e-12);

    Eigen::MatrixXd x(1, 2), y(1, 2);
    x << 0, 1;
    y << 1, 1;
    const double kxy = kernel_value(k, x.row(0).transpose(), y.row(0).transpose());
    CHECK(mmd_loss(k, x, y) == doctest::Approx(2 - 2 * kxy).epsilon(1e-14));
    CHECK(mmd_loss(k, x, y) >= 0.0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = random_matrix(4, 6, 10 + seed);
        const auto r = random_matrix(4, 6, 30 + seed);
        CHECK(std::abs(mmd_loss(k, g, r) - mmd_double_loop(k, g, r)) < 1e-12);
        CHECK(mmd_loss(k, g, r) >= -1e-12);
    }
    CHECK_THROWS_AS(mmd_loss(k, Eigen::MatrixXd(0, 2), x), ShapeError);
}

TEST_CASE("MMD on bit batches equals MMD on bit matrices") {
    const auto k = RbfKernel::default_bandwidths();
    const SampleBatch g{4, {1, 5, 5, 15}};
    const SampleBatch r{4, {0, 3, 12, 15}};
    CHECK(mmd_loss(k, g, r) == doctest::Approx(mmd_loss(k, bits_matrix(g.outcomes, 4), bits_matrix(r.outcomes, 4))));
}

TEST_CASE("weighted MMD value and row gradients") {
    const auto k = RbfKernel::default_bandwidths();
    const auto a = random_matrix(5, 2, 3);
    const auto b = random_matrix(3, 2, 4);
    const Eigen::VectorXd wa = Eigen::VectorXd::Constant(5, 0.2);
    Eigen::VectorXd wb(3);
    wb << 0.5, 0.3, 0.2;
    const auto vg = mmd_weighted(k, a, wa, b, wb);
    const Eigen::VectorXd ub = Eigen::VectorXd::Constant(3, 1.0 / 3);
    const auto a4 = random_matrix(3, 2, 5);
    CHECK(mmd_weighted(k, a4, ub, b, ub).value == doctest::Approx(mmd_loss(k, a4, b)).epsilon(1e-13));
    const auto ga = fd_grad(a, [&](const Eigen::MatrixXd& z) { return mmd_weighted(k, z, wa, b, wb).value; });
    const auto gb = fd_grad(b, [&](const Eigen::MatrixXd& z) { return mmd_weighted(k, a, wa, z, wb).value; });
    CHECK((ga - vg.grad_a).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((gb - vg.grad_b).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("non-saturating GAN losses") {
    const std::vector<double> half(4, 0.5);
    const auto l = gan_ns_losses(half, half);
    CHECK(l.loss_d == doctest::Approx(1.386294).epsilon(1e-6));
    CHECK(l.loss_d == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
    CHECK(l.loss_g == doctest::Approx(0.693147).epsilon(1e-6));

    double previous = 1e9;
    for (double delta : {1e-1, 1e-2, 1e-3, 1e-5}) {
        const std::vector<double> real(3, 1 - delta);
        const std::vector<double> gen(3, delta);
        const double loss_d = gan_ns_losses(real, gen).loss_d;
        CHECK(loss_d < previous);
        previous = loss_d;
    }
    CHECK(previous < 1e-4);

    double prev_g = 1e9;
    for (double s : {0.1, 0.3, 0.6, 0.9}) {
        const double lg = gan_ns_losses(half, std::vector<double>(4, s)).loss_g;
        CHECK(lg < prev_g);
        prev_g = lg;
    }

    const std::vector<double> extreme{0.0, 1.0};
    const auto clamped = gan_ns_losses(extreme, extreme);
    CHECK(std::isfinite(clamped.loss_d));
    CHECK(std::isfinite(clamped.loss_g));
    CHECK_THROWS_AS(gan_ns_losses({}, half), ShapeError);
}

TEST_CASE("MCR2 distance") {
    const Mcr2Config cfg;
    SUBCASE("X = Y gives zero") {
        const auto x = random_matrix(8, 2, 1);
        CHECK(std::abs(mcr2_distance(x, x, cfg)) < 1e-12);
    }
    SUBCASE("orthogonal unit samples, d=2, m=1: ln 3 - ln(5)/2") {
        Eigen::MatrixXd x(1, 2), y(1, 2);
        x << 1, 0;
        y << 0, 1;
        CHECK(mcr2_distance(x, y, cfg) == doctest::Approx(std::log(3.0) - 0.5 * std::log(5.0)).epsilon(1e-14));
        CHECK(std::abs(mcr2_distance(x, y, cfg) - delta_r_oracle(x, y, 0.5)) < 1e-10);
    }
    SUBCASE("random batches match the eigenvalue oracle and are nonnegative") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const auto x = random_matrix(8, 2, 100 + seed);
            const auto y = random_matrix(8, 2, 200 + seed);
            const double v = mcr2_distance(x, y, cfg);
            CHECK(std::abs(v - delta_r_oracle(x, y, 0.5)) < 1e-10);
            CHECK(v >= -1e-10);
        }
    }
    SUBCASE("mismatched batch sizes") {
        CHECK_THROWS_AS(mcr2_distance(random_matrix(4, 2, 1), random_matrix(3, 2, 2), cfg), ShapeError);
        Eigen::MatrixXd bad = random_matrix(4, 2, 1);
        bad(0, 0) = std::nan("");
        CHECK_THROWS_AS(mcr2_distance(bad, bad, cfg), NumericError);
        CHECK_THROWS_AS((Mcr2Config{0.0, true}.validate()), ConfigError);
    }
}

TEST_CASE("weighted MCR2 value and gradients") {
    for (bool centered : {true, false}) {
        const Mcr2Config cfg{0.5, centered};
        const auto x = random_matrix(6, 2, 7);
        const auto y = random_matrix(4, 2, 8);
        Eigen::VectorXd wx = (random_matrix(6, 1, 9).array().abs() + 0.1).matrix();
        wx /= wx.sum();
        const Eigen::VectorXd wy = Eigen::VectorXd::Constant(4, 0.25);
        const auto vg = mcr2_weighted(x, wx, y, wy, cfg);
        const auto ga = fd_grad(x, [&](const Eigen::MatrixXd& z) { return mcr2_weighted(z, wx, y, wy, cfg).value; });
        const auto gb = fd_grad(y, [&](const Eigen::MatrixXd& z) { return mcr2_weighted(x, wx, z, wy, cfg).value; });
        CHECK((ga - vg.grad_a).cwiseAbs().maxCoeff() < 1e-7);
        CHECK((gb - vg.grad_b).cwiseAbs().maxCoeff() < 1e-7);
    }
    const auto x = random_matrix(5, 2, 1);
    const auto y = random_matrix(5, 2, 2);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(5, 0.2);
    CHECK(mcr2_weighted(x, u, y, u, Mcr2Config{}).value == doctest::Approx(mcr2_distance(x, y, Mcr2Config{})).epsilon(1e-13));
}

TEST_CASE("log_det_spd") {
    const auto a = random_matrix(5, 5, 4);
    const Eigen::MatrixXd spd = a * a.transpose() + Eigen::MatrixXd::Identity(5, 5);
    CHECK(log_det_spd(spd) == doctest::Approx(logdet_eig(spd)).epsilon(1e-12));
}

TEST_CASE("interpolated generator loss") {
    CHECK(interpolated_g_loss(0.0, 2.0, 0.4) == 2.0);
    CHECK(interpolated_g_loss(1.0, 2.0, 0.4) == 0.4);
    CHECK(interpolated_g_loss(0.5, 2.0, 0.4) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK_THROWS_AS(interpolated_g_loss(-0.1, 1, 1), ConfigError);
    CHECK_THROWS_AS(interpolated_g_loss(1.5, 1, 1), ConfigError);
}

TEST_CASE("deep kernel MMD") {
    auto net = MlpNet::feature_mapper(4, 3);
    const auto k = RbfKernel::default_bandwidths();
    const SampleBatch batch{4, {3, 5, 9, 12}};
    CHECK(std::abs(deep_kernel_mmd_loss(net, k, batch, batch)) < 1e-12);
    const SampleBatch other{4, {0, 15, 6, 6}};
    CHECK(deep_kernel_mmd_loss(net, k, batch, other) >= 0.0);
    auto scorer = MlpNet::scorer(4, 3);
    CHECK_THROWS_AS(deep_kernel_mmd_loss(scorer, k, batch, batch), ConfigError);
}
