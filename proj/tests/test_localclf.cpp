#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "relview/localclf.hpp"
#include "relview/synth.hpp"

using namespace relview;

namespace {

ObjectHypothesis scored(const std::string& cat, double score) {
    ObjectHypothesis h;
    h.category = cat;
    h.box = {50.0, 50.0, 40.0, 40.0};
    h.score = score;
    return h;
}

// One matched scene per state-count triple: n_pp correct, n_mp wrong-bin,
// n_mm unmatched hypotheses, with scores drawn from the given generators.
template <typename Fpp, typename Fmp, typename Fmm>
Scene scene_with_states(int n_pp, int n_mp, int n_mm, Fpp fpp, Fmp fmp, Fmm fmm) {
    Scene s;
    ObjectHypothesis a;
    a.category = "car";
    a.box = {50.0, 50.0, 40.0, 40.0};
    a.score = 1.0;
    a.bin = 1;
    for (int i = 0; i < n_pp + n_mp; ++i) {
        a.box.cx = 100.0 * (i + 1);
        s.annotations.push_back(a);
    }
    for (int i = 0; i < n_pp; ++i) {
        ObjectHypothesis h = scored("car", fpp());
        h.bin = 1;
        h.box.cx = 100.0 * (i + 1);
        h.state = HypothesisState(true, true, i);
        s.hypotheses.push_back(h);
    }
    for (int i = 0; i < n_mp; ++i) {
        ObjectHypothesis h = scored("car", fmp());
        h.bin = 3;
        h.box.cx = 100.0 * (n_pp + i + 1);
        h.state = HypothesisState(true, false, n_pp + i);
        s.hypotheses.push_back(h);
    }
    for (int i = 0; i < n_mm; ++i) {
        ObjectHypothesis h = scored("car", fmm());
        h.box.cy = 500.0;
        h.state = HypothesisState(false, false, -1);
        s.hypotheses.push_back(h);
    }
    return s;
}

}  // namespace

TEST_CASE("identical score distributions reduce the weight to the prior") {
    // All three states see the exact same score samples, so the fitted
    // densities are identical and cancel in the posterior.
    std::vector<double> pool = {0.2, 0.4, 0.6, 0.8, 0.5};
    int i_pp = 0, i_mp = 0, i_mm = 0;
    const Scene s = scene_with_states(
        5, 5, 5, [&] { return pool[static_cast<std::size_t>(i_pp++ % 5)]; },
        [&] { return pool[static_cast<std::size_t>(i_mp++ % 5)]; },
        [&] { return pool[static_cast<std::size_t>(i_mm++ % 5)]; });
    const ScoreModel model = fit_score_model({s});
    const StatePriors& p = model.priors.at("car");
    for (double q : {0.1, 0.5, 0.77}) {
        REQUIRE(local_weight(model, scored("car", q)) ==
                Catch::Approx(p.p_pp).margin(1e-12));
    }
}

TEST_CASE("well-separated score distributions calibrate sharply") {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> hi(0.9, 0.01), lo(0.1, 0.01);
    std::vector<Scene> scenes;
    for (int i = 0; i < 10; ++i)
        scenes.push_back(scene_with_states(6, 3, 3, [&] { return hi(rng); },
                                           [&] { return lo(rng); },
                                           [&] { return lo(rng); }));
    const ScoreModel model = fit_score_model(scenes);
    REQUIRE(local_weight(model, scored("car", 0.9)) > 0.95);
    REQUIRE(local_weight(model, scored("car", 0.1)) < 0.05);
}

TEST_CASE("weight is monotone when high scores indicate correctness") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> hi(0.8, 0.05), lo(0.25, 0.05);
    std::vector<Scene> scenes;
    for (int i = 0; i < 20; ++i)
        scenes.push_back(scene_with_states(5, 3, 3, [&] { return hi(rng); },
                                           [&] { return lo(rng); },
                                           [&] { return lo(rng); }));
    const ScoreModel model = fit_score_model(scenes);
    double prev = -1.0;
    for (int g = 0; g <= 40; ++g) {
        const double s = 0.1 + 0.7 * g / 40.0;
        const double w = local_weight(model, scored("car", s));
        REQUIRE(w >= prev - 1e-12);
        prev = w;
    }
}

TEST_CASE("weights stay in the unit interval and posteriors sum to one") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Scene> scenes;
    for (int i = 0; i < 10; ++i)
        scenes.push_back(scene_with_states(4, 4, 4, [&] { return unit(rng); },
                                           [&] { return unit(rng); },
                                           [&] { return unit(rng); }));
    const ScoreModel model = fit_score_model(scenes);
    for (int t = 0; t < 200; ++t) {
        const double w = local_weight(model, scored("car", unit(rng) * 2.0 - 0.5));
        REQUIRE(w >= 0.0);
        REQUIRE(w <= 1.0);
    }
}

TEST_CASE("certain prior forces weight one") {
    // Only correct hypotheses in training.
    const Scene s = scene_with_states(6, 0, 0, [] { return 0.8; }, [] { return 0.0; },
                                      [] { return 0.0; });
    const ScoreModel model = fit_score_model({s});
    REQUIRE(model.priors.at("car").p_pp == 1.0);
    for (double q : {0.0, 0.4, 0.9}) REQUIRE(local_weight(model, scored("car", q)) == 1.0);
}

TEST_CASE("sparse states fall back to the uniform density") {
    // Two wrong-bin samples sit below the five-sample default, so that cell
    // becomes a uniform fallback but still yields a usable weight.
    std::mt19937_64 rng(47);
    std::normal_distribution<double> hi(0.8, 0.05), lo(0.3, 0.05);
    const Scene s = scene_with_states(8, 2, 0, [&] { return hi(rng); },
                                      [&] { return lo(rng); }, [] { return 0.0; });
    const ScoreModel model = fit_score_model({s});
    REQUIRE(model.categories.at("car").by_state[1].kind == Density::Kind::Uniform);
    const double w = local_weight(model, scored("car", 0.8));
    REQUIRE(w > 0.0);
    REQUIRE(w <= 1.0);
}

TEST_CASE("unknown categories and empty training sets are rejected") {
    REQUIRE_THROWS_AS(fit_score_model({}), DataError);
    Scene empty;
    empty.image_id = "x";
    REQUIRE_THROWS_AS(fit_score_model({empty}), DataError);
    const Scene s = scene_with_states(5, 0, 0, [] { return 0.5; }, [] { return 0.0; },
                                      [] { return 0.0; });
    const ScoreModel model = fit_score_model({s});
    REQUIRE_THROWS_AS(local_weight(model, scored("bus", 0.5)), DataError);
}

TEST_CASE("unmatched training scenes are refused") {
    Scene s;
    s.hypotheses.push_back(scored("car", 0.5));
    REQUIRE_THROWS_AS(fit_score_model({s}), DataError);
}
