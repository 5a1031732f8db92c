#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "relview/density.hpp"
#include "relview/synth.hpp"

using namespace relview;

namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

}  // namespace

TEST_CASE("single-point density peaks at the Gaussian normalization") {
    const Kde kde = kde_fit({{0.0}});
    const double h = kde.bandwidth[0];
    REQUIRE(kde.eval({0.0}) == Catch::Approx(1.0 / (kSqrt2Pi * h)).epsilon(1e-12));
    // The peak is the global maximum.
    REQUIRE(kde.eval({0.1}) < kde.eval({0.0}));
    REQUIRE(kde.eval({-0.5}) < kde.eval({0.0}));
}

TEST_CASE("two-point density with unit bandwidth at the midpoint") {
    const Kde kde = kde_fit_with_bandwidth({{-1.0}, {1.0}}, {1.0});
    const double expected = std::exp(-0.5) / kSqrt2Pi;  // ~0.24197
    REQUIRE(kde.eval({0.0}) == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(kde.eval({0.0}) == Catch::Approx(0.24197).margin(5e-6));
}

TEST_CASE("one-point density one bandwidth away") {
    const Kde kde = kde_fit_with_bandwidth({{0.0}}, {2.0});
    const double expected = std::exp(-0.5) / (2.0 * kSqrt2Pi);  // ~0.12099
    REQUIRE(kde.eval({2.0}) == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(kde.eval({2.0}) == Catch::Approx(0.12099).margin(5e-6));
}

TEST_CASE("density far from all samples vanishes") {
    const Kde kde = kde_fit({{0.0}, {1.0}, {2.0}, {5.0}});
    const double h = kde.bandwidth[0];
    REQUIRE(kde.eval({5.0 + 100.0 * h}) < 1e-30);
}

TEST_CASE("density fit validates its inputs") {
    REQUIRE_THROWS_AS(kde_fit({}), DataError);
    REQUIRE_THROWS_AS(kde_fit({{std::nan("")}}), DataError);
    REQUIRE_THROWS_AS(kde_fit_with_bandwidth({{0.0}}, {0.0}), ConfigError);
    REQUIRE_THROWS_AS(kde_fit_with_bandwidth({{0.0}}, {1.0, 1.0}), ConfigError);
    REQUIRE_THROWS_AS(kde_fit({{0.0}, {0.0, 1.0}}), ConfigError);
}

TEST_CASE("density evaluation rejects dimension mismatches") {
    const Kde kde = kde_fit({{0.0, 0.0}, {1.0, 1.0}});
    REQUIRE_THROWS_AS(kde.log_eval({0.0}), ConfigError);
}

TEST_CASE("bandwidth follows the sample-deviation rule with a floor") {
    // Two points 0,1: sample sd sqrt(1/2), m^(-1/5) with m=2.
    const Kde kde = kde_fit({{0.0}, {1.0}});
    const double expected = std::sqrt(0.5) * std::pow(2.0, -0.2);
    REQUIRE(kde.bandwidth[0] == Catch::Approx(expected).epsilon(1e-12));
    // Identical points: zero deviation, zero range, floored bandwidth.
    const Kde flat = kde_fit({{3.0}, {3.0}, {3.0}, {3.0}, {3.0}});
    REQUIRE(flat.bandwidth[0] == Catch::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("density integrates to one in 1-d and 2-d") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> draw(0.0, 2.0);
    for (int t = 0; t < 5; ++t) {
        std::vector<std::vector<double>> pts1, pts2;
        const int m = 5 + static_cast<int>(rng() % 20);
        for (int i = 0; i < m; ++i) {
            pts1.push_back({draw(rng)});
            pts2.push_back({draw(rng), draw(rng)});
        }
        REQUIRE(testref::kde_mass_1d(kde_fit(pts1)) == Catch::Approx(1.0).margin(1e-3));
        REQUIRE(testref::kde_mass_2d(kde_fit(pts2)) == Catch::Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("density is continuous") {
    const Kde kde = kde_fit({{0.0}, {0.5}, {2.0}, {2.5}, {3.0}});
    for (double x : {0.0, 0.7, 1.9, 3.0, 5.0}) {
        const double delta = 1e-8;
        REQUIRE(std::abs(kde.eval({x + delta}) - kde.eval({x})) < 1e-6);
    }
}

TEST_CASE("state posterior reproduces the hand-computed ratio") {
    const StatePriors priors{0.5, 0.3, 0.2};
    const std::array<double, 3> log_lik{std::log(0.4), std::log(0.2), std::log(0.4)};
    REQUIRE(state_posterior(log_lik, priors) == Catch::Approx(0.20 / 0.34).epsilon(1e-12));
}

TEST_CASE("state posterior with a certain prior is one") {
    const StatePriors priors{1.0, 0.0, 0.0};
    REQUIRE(state_posterior({std::log(0.1), std::log(0.9), std::log(0.9)}, priors) == 1.0);
}

TEST_CASE("equal conditionals reduce the posterior to the prior") {
    const StatePriors priors{0.6, 0.3, 0.1};
    const double ll = std::log(0.37);
    REQUIRE(state_posterior({ll, ll, ll}, priors) == Catch::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("state posteriors sum to one on random parameterizations") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> unit(1e-6, 1.0);
    for (int t = 0; t < 1000; ++t) {
        double a = unit(rng), b = unit(rng), c = unit(rng);
        const double z = a + b + c;
        const StatePriors priors{a / z, b / z, c / z};
        const std::array<double, 3> ll{std::log(unit(rng)), std::log(unit(rng)),
                                       std::log(unit(rng))};
        const auto post = state_posteriors(ll, priors);
        REQUIRE(post[0] + post[1] + post[2] == Catch::Approx(1.0).margin(1e-9));
        REQUIRE(state_posterior(ll, priors) == Catch::Approx(post[0]).margin(1e-15));
    }
}

TEST_CASE("posterior matches the linear-space reference") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unit(1e-6, 1.0);
    for (int t = 0; t < 500; ++t) {
        double a = unit(rng), b = unit(rng), c = unit(rng);
        const double z = a + b + c;
        const StatePriors priors{a / z, b / z, c / z};
        const std::array<double, 3> cond{unit(rng), unit(rng), unit(rng)};
        const double expected = oracle_posterior(cond, priors);
        const std::array<double, 3> ll{std::log(cond[0]), std::log(cond[1]),
                                       std::log(cond[2])};
        REQUIRE(state_posterior(ll, priors) == Catch::Approx(expected).margin(1e-9));
    }
}

namespace {

// Noiseless planted scenes, matched: every hypothesis is a correct one.
std::vector<Scene> matched_planted_scenes(int n, double rho, double fp_rate,
                                          std::uint64_t seed) {
    PlantedRule rule;
    rule.k = 4;
    rule.lane_bands = equal_lane_bands(4);
    rule.sigma = 1.0;
    rule.rho = rho;
    rule.fp_rate = fp_rate;
    std::vector<Scene> scenes;
    for (int i = 0; i < n; ++i)
        scenes.push_back(match_scene(
            generate_scene(rule, seed + static_cast<std::uint64_t>(i), "s"), 0.5));
    return scenes;
}

}  // namespace

TEST_CASE("all-correct training data yields a degenerate prior") {
    const auto scenes = matched_planted_scenes(30, 0.0, 0.0, 100);
    const RelationalModel model =
        fit_relational_model(scenes, RelationFormat::RF1, 4);
    const StatePriors& p = model.priors.at("car");
    REQUIRE(p.p_pp == 1.0);
    REQUIRE(p.p_mp == 0.0);
    REQUIRE(p.p_mm == 0.0);
    // Only the correct-state cells can be KDE-fitted.
    const PairDensities& cell = model.pairs.at({"car", "car"});
    REQUIRE(cell.pp.kind == Density::Kind::Fitted);
    REQUIRE(cell.mp.kind != Density::Kind::Fitted);
    REQUIRE(cell.mm.kind != Density::Kind::Fitted);
}

TEST_CASE("priors are the per-category state proportions") {
    // Hand-build matched scenes with known counts 60/20/20.
    std::vector<Scene> scenes;
    Scene s;
    ObjectHypothesis a;
    a.category = "car";
    a.box = {50.0, 50.0, 40.0, 40.0};
    a.score = 1.0;
    a.bin = 1;
    s.annotations.assign(4, a);
    for (int i = 0; i < 4; ++i) s.annotations[static_cast<std::size_t>(i)].box.cx = 100.0 * (i + 1);
    for (int i = 0; i < 10; ++i) {
        ObjectHypothesis h = a;
        h.score = 0.5;
        if (i < 6) {  // correct
            h.box.cx = 100.0 * (1 + i % 2);
            h.state = HypothesisState(true, true, i % 2);
        } else if (i < 8) {  // wrong bin
            h.bin = 3;
            h.box.cx = 100.0 * (3 + i % 2);
            h.state = HypothesisState(true, false, 2 + i % 2);
        } else {  // unmatched
            h.box.cx = 900.0;
            h.state = HypothesisState(false, false, -1);
        }
        s.hypotheses.push_back(h);
    }
    scenes.push_back(s);
    const RelationalModel model =
        fit_relational_model(scenes, RelationFormat::RF1, 4);
    const StatePriors& p = model.priors.at("car");
    REQUIRE(p.p_pp == Catch::Approx(0.6).epsilon(1e-12));
    REQUIRE(p.p_mp == Catch::Approx(0.2).epsilon(1e-12));
    REQUIRE(p.p_mm == Catch::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("a single category produces exactly one pair entry") {
    const auto scenes = matched_planted_scenes(10, 0.2, 0.5, 200);
    const RelationalModel model =
        fit_relational_model(scenes, RelationFormat::RF1, 4);
    REQUIRE(model.categories == std::vector<std::string>{"car"});
    REQUIRE(model.pairs.size() == 1);
}

TEST_CASE("relational fit rejects bad inputs") {
    REQUIRE_THROWS_AS(fit_relational_model({}, RelationFormat::RF1, 4), DataError);
    // Unmatched scenes (no states) are refused.
    PlantedRule rule;
    rule.lane_bands = equal_lane_bands(4);
    std::vector<Scene> raw = {generate_scene(rule, 5, "x")};
    REQUIRE_THROWS_AS(fit_relational_model(raw, RelationFormat::RF1, 4), DataError);
    // A category present only among annotations has no score/state data.
    Scene s = match_scene(raw[0], 0.5);
    ObjectHypothesis ghost;
    ghost.category = "tram";
    ghost.box = {10.0, 10.0, 5.0, 5.0};
    ghost.score = 1.0;
    s.annotations.push_back(ghost);
    REQUIRE_THROWS_AS(fit_relational_model({s}, RelationFormat::RF1, 4), DataError);
}

TEST_CASE("correct hypotheses are replaced by their annotations in the pools") {
    // One scene, two annotations, two correct hypotheses whose boxes are
    // jittered. After substitution the correct-state pool must contain the
    // relation computed from the clean annotation geometry, not the jitter.
    Scene s;
    for (int i = 0; i < 2; ++i) {
        ObjectHypothesis a;
        a.category = "car";
        a.box = {100.0 + 200.0 * i, 50.0, 40.0, 40.0};
        a.bin = i;
        a.score = 1.0;
        s.annotations.push_back(a);
        ObjectHypothesis h = a;
        h.score = 0.9;
        h.box.cx += 5.0;  // jitter that still matches (IoU ~ 0.78)
        s.hypotheses.push_back(h);
    }
    const Scene m = match_scene(s, 0.5);
    const RelationalModel model = fit_relational_model({m}, RelationFormat::RF1, 4, 1);
    const PairDensities& cell = model.pairs.at({"car", "car"});
    REQUIRE(cell.pp.kind == Density::Kind::Fitted);
    // Annotation geometry: rx = (300-100)/40 = 5 exactly (jittered boxes
    // would give 4.875 or 5.125).
    bool found = false;
    for (const auto& sample : cell.pp.kde.samples)
        if (sample[0] == 5.0) found = true;
    REQUIRE(found);
    for (const auto& sample : cell.pp.kde.samples)
        REQUIRE((sample[0] == 5.0 || sample[0] == -5.0));
}

TEST_CASE("uniform fallback cells carry the pooled-box constant") {
    FeatureBox box;
    box.expand({0.0, 0.0});
    box.expand({2.0, 5.0});
    const Density d = density_uniform(box.log_uniform_const());
    REQUIRE(d.log_eval({1.0, 1.0}) == Catch::Approx(-std::log(10.0)).epsilon(1e-12));
    const Density absent;
    REQUIRE_THROWS_AS(absent.log_eval({0.0}), NumericalError);
}

TEST_CASE("log-sum-exp handles extreme magnitudes") {
    REQUIRE(log_sum_exp({-1000.0, -1000.0}) ==
            Catch::Approx(-1000.0 + std::log(2.0)).epsilon(1e-12));
    REQUIRE(log_sum_exp({700.0, 0.0}) == Catch::Approx(700.0).epsilon(1e-12));
    const double ninf = -std::numeric_limits<double>::infinity();
    REQUIRE(log_sum_exp({ninf, ninf}) == ninf);
}
