#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "qcbm/error.hpp"
#include "qcbm/gradients.hpp"
#include "qcbm/trainer.hpp"

using namespace qcbm;

namespace {

SchemeConfig short_config(Scheme scheme, long iterations = 30) {
    SchemeConfig cfg;
    cfg.scheme = scheme;
    cfg.iterations = iterations;
    cfg.lr_g = 1e-2;
    cfg.lr_d = 1e-2;
    cfg.root_seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("scheme names round-trip and select the right net") {
    for (Scheme s : {Scheme::MmdRbf, Scheme::GanNs, Scheme::GanMcr2, Scheme::InterNsMcr2, Scheme::DnnMmd, Scheme::FineTune}) {
        CHECK(parse_scheme(scheme_name(s)) == s);
    }
    CHECK_THROWS_AS(parse_scheme("WGAN"), ConfigError);
    CHECK_FALSE(scheme_head(Scheme::MmdRbf).has_value());
    CHECK(*scheme_head(Scheme::GanNs) == Head::Scorer);
    CHECK(*scheme_head(Scheme::InterNsMcr2) == Head::Scorer);
    CHECK(*scheme_head(Scheme::GanMcr2) == Head::FeatureMapper);
    CHECK(*scheme_head(Scheme::DnnMmd) == Head::FeatureMapper);
}

TEST_CASE("config validation") {
    SchemeConfig cfg;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SchemeConfig{};
    cfg.batch_m = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SchemeConfig{};
    cfg.d_steps_per_g = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SchemeConfig{};
    cfg.bandwidths = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(train(SchemeConfig{}, CircuitSpec::ring(6, 3), {2, 2}), ConfigError);
}

TEST_CASE("every scheme trains deterministically with well-formed traces") {
    const BasSpec bas{2, 2};
    const auto spec = CircuitSpec::ring(4, 2);
    for (Scheme s : {Scheme::MmdRbf, Scheme::GanNs, Scheme::GanMcr2, Scheme::InterNsMcr2, Scheme::DnnMmd}) {
        CAPTURE(scheme_name(s));
        auto cfg = short_config(s);
        cfg.alpha = 0.1;
        const auto a = train(cfg, spec, bas);
        const auto b = train(cfg, spec, bas);
        CHECK(a.final_params == b.final_params);
        REQUIRE(a.trace.size() == 4);  // iterations 0, 10, 20, 30
        for (std::size_t i = 0; i < a.trace.size(); ++i) {
            CHECK(a.trace[i].tv == b.trace[i].tv);
            CHECK(a.trace[i].tv >= 0.0);
            CHECK(a.trace[i].tv <= 1.0);
            double total = a.trace[i].invalid_mass;
            for (double m : a.trace[i].mode_masses) total += m;
            CHECK(std::abs(total - 1.0) < 1e-10);
            if (i > 0) CHECK(a.trace[i].iteration > a.trace[i - 1].iteration);
        }
        CHECK(a.final_net.has_value() == scheme_head(s).has_value());
        cfg.root_seed = 6;
        CHECK_FALSE(train(cfg, spec, bas).final_params == a.final_params);
    }
}

TEST_CASE("exact target mode runs for discriminator schemes") {
    auto cfg = short_config(Scheme::GanNs, 10);
    cfg.exact_pstar = true;
    const auto r = train(cfg, CircuitSpec::ring(4, 2), {2, 2});
    CHECK(r.trace.size() == 2);
}

TEST_CASE("explicit initial parameters and zero iterations") {
    const auto spec = CircuitSpec::ring(4, 2);
    const auto init = random_params(spec, 77);
    const auto r = train(short_config(Scheme::MmdRbf, 0), spec, {2, 2}, &init);
    CHECK(r.final_params == init);
    CHECK(r.trace.size() == 1);
    const ParamVector wrong(std::vector<double>(3, 0.0));
    CHECK_THROWS_AS(train(short_config(Scheme::MmdRbf), spec, {2, 2}, &wrong), ShapeError);
}

TEST_CASE("fine_tune") {
    const auto spec = CircuitSpec::ring(4, 2);
    const auto prior = train(short_config(Scheme::GanNs, 20), spec, {2, 2});

    auto ft = short_config(Scheme::FineTune, 0);
    const auto same = fine_tune(prior, ft);
    CHECK(same.final_params == prior.final_params);
    CHECK(same.trace.size() == prior.trace.size());

    ft.iterations = 20;
    const auto next = fine_tune(prior, ft);
    REQUIRE(next.trace.size() == prior.trace.size() + 2);
    for (std::size_t i = 0; i < prior.trace.size(); ++i) CHECK(next.trace[i].tv == prior.trace[i].tv);
    CHECK(next.trace.back().iteration == 40);
    CHECK_FALSE(next.final_params == prior.final_params);

    CHECK_THROWS_AS(fine_tune(prior, short_config(Scheme::GanNs)), ConfigError);
}

TEST_CASE("grid search and aggregation") {
    const auto spec = CircuitSpec::ring(4, 1);
    const auto cells = grid_search(short_config(Scheme::MmdRbf, 20), spec, {2, 2}, {1e-2, 1e-3}, {1e-3}, 2, 2);
    REQUIRE(cells.size() == 2);
    for (const auto& c : cells) {
        CHECK(c.runs.size() == 2);
        CHECK(c.band.mean.size() == c.runs.front().trace.size());
        for (std::size_t i = 0; i < c.band.mean.size(); ++i) {
            CHECK(c.band.mean[i] == doctest::Approx(0.5 * (c.runs[0].trace[i].tv + c.runs[1].trace[i].tv)));
        }
    }
    const auto single = grid_search(short_config(Scheme::MmdRbf, 20), spec, {2, 2}, {1e-2}, {1e-3}, 1, 1);
    for (std::size_t i = 0; i < single[0].band.mean.size(); ++i) {
        CHECK(single[0].band.mean[i] == single[0].runs[0].trace[i].tv);
        CHECK(single[0].band.sd[i] == 0.0);
    }
    CHECK_THROWS_AS(grid_search(short_config(Scheme::MmdRbf), spec, {2, 2}, {}, {1e-3}, 1, 1), ConfigError);
}

TEST_CASE("parallel seeds match sequential runs") {
    const auto spec = CircuitSpec::ring(4, 1);
    const auto cfg = short_config(Scheme::GanNs, 20);
    const auto par = run_seeds(cfg, spec, {2, 2}, {3, 4, 5}, 3);
    const auto seq = run_seeds(cfg, spec, {2, 2}, {3, 4, 5}, 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(par[i].final_params == seq[i].final_params);
}

TEST_CASE("MCR2 discriminator ascent does not decrease the rate reduction on a frozen generator") {
    const BasSpec bas{2, 2};
    const auto spec = CircuitSpec::ring(4, 3);
    const auto table = WeightedOutcomes::from_distribution(target_distribution(bas));
    WeightedOutcomes real{4, {}, {}};
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table.weights[i] > 0) {
            real.outcomes.push_back(table.outcomes[i]);
            real.weights.push_back(table.weights[i]);
        }
    }
    auto cfg = short_config(Scheme::GanMcr2);
    cfg.lr_d = 1e-3;
    const RbfKernel kernel(cfg.bandwidths);
    const Mcr2Config mcr{cfg.eps_sq, true};

    auto rate_reduction = [&](MlpNet& net, const WeightedOutcomes& gen) {
        std::vector<std::uint32_t> rows(real.outcomes);
        rows.insert(rows.end(), gen.outcomes.begin(), gen.outcomes.end());
        net.set_mode(Mode::Train);
        const Eigen::MatrixXd out = net.forward(bits_matrix(rows, 4));
        const auto n_real = static_cast<Eigen::Index>(real.size());
        const auto n_gen = static_cast<Eigen::Index>(gen.size());
        return mcr2_weighted(out.bottomRows(n_gen), Eigen::Map<const Eigen::VectorXd>(gen.weights.data(), n_gen),
                             out.topRows(n_real), Eigen::Map<const Eigen::VectorXd>(real.weights.data(), n_real), mcr)
            .value;
    };

    std::vector<double> deltas;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto gen = WeightedOutcomes::from_distribution(exact_distribution(spec, random_params(spec, seed)));
        auto net = MlpNet::feature_mapper(4, 100 + seed);
        Adam opt(AdamConfig{cfg.lr_d});
        const double before = rate_reduction(net, gen);
        for (int step = 0; step < 50; ++step) discriminator_update(net, opt, cfg, kernel, real, gen);
        deltas.push_back(rate_reduction(net, gen) - before);
    }
    std::sort(deltas.begin(), deltas.end());
    CHECK(0.5 * (deltas[9] + deltas[10]) >= 0.0);
}

TEST_CASE("run directory contents") {
    const auto dir = std::filesystem::temp_directory_path() / "qcbm_test_trainer_run";
    std::filesystem::remove_all(dir);
    const auto r = train(short_config(Scheme::GanNs, 10), CircuitSpec::ring(4, 1), {2, 2});
    write_run(r, dir);
    for (const char* f : {"trace.csv", "report.json", "params.txt", "net.txt"}) CHECK(std::filesystem::exists(dir / f));
    CHECK(load_params(dir / "params.txt").params == r.final_params);
}
