#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include "relview/synth.hpp"

using namespace relview;

namespace {

PlantedRule base_rule(int k = 4) {
    PlantedRule rule;
    rule.k = k;
    rule.lane_bands = equal_lane_bands(k);
    return rule;
}

bool same_hyp(const ObjectHypothesis& a, const ObjectHypothesis& b) {
    return a.category == b.category && a.box.cx == b.box.cx && a.box.cy == b.box.cy &&
           a.box.w == b.box.w && a.box.h == b.box.h && a.score == b.score &&
           a.bin == b.bin && a.local_scores == b.local_scores;
}

bool same_scene(const Scene& a, const Scene& b) {
    if (a.image_id != b.image_id || a.annotations.size() != b.annotations.size() ||
        a.hypotheses.size() != b.hypotheses.size())
        return false;
    for (std::size_t i = 0; i < a.annotations.size(); ++i)
        if (!same_hyp(a.annotations[i], b.annotations[i])) return false;
    for (std::size_t i = 0; i < a.hypotheses.size(); ++i)
        if (!same_hyp(a.hypotheses[i], b.hypotheses[i])) return false;
    return true;
}

int band_bin_at(const PlantedRule& rule, double cy) {
    for (const auto& band : rule.lane_bands)
        if (cy >= band.y0 && cy < band.y1) return band.bin;
    return -1;
}

}  // namespace

TEST_CASE("scene generation is a pure function of the seed") {
    PlantedRule rule = base_rule();
    rule.sigma = 2.0;
    rule.rho = 0.3;
    rule.fp_rate = 1.5;
    for (std::uint64_t seed : {1ULL, 42ULL, 987654321ULL})
        REQUIRE(same_scene(generate_scene(rule, seed, "x"),
                           generate_scene(rule, seed, "x")));
    REQUIRE_FALSE(same_scene(generate_scene(rule, 1, "x"),
                             generate_scene(rule, 2, "x")));
}

TEST_CASE("the noiseless limit reproduces annotations exactly") {
    PlantedRule rule = base_rule();  // sigma, rho, fp_rate all zero
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scene s = generate_scene(rule, seed, "n");
        REQUIRE(s.hypotheses.size() == s.annotations.size());
        for (std::size_t i = 0; i < s.annotations.size(); ++i) {
            REQUIRE(s.hypotheses[i].box.cx == s.annotations[i].box.cx);
            REQUIRE(s.hypotheses[i].box.cy == s.annotations[i].box.cy);
            REQUIRE(s.hypotheses[i].box.w == s.annotations[i].box.w);
            REQUIRE(s.hypotheses[i].box.h == s.annotations[i].box.h);
            REQUIRE(s.hypotheses[i].bin == s.annotations[i].bin);
        }
    }
}

TEST_CASE("full label corruption never reproduces the true bin") {
    PlantedRule rule = base_rule();
    rule.rho = 1.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Scene s = generate_scene(rule, seed, "c");
        for (std::size_t i = 0; i < s.annotations.size(); ++i)
            REQUIRE(s.hypotheses[i].bin != s.annotations[i].bin);
    }
}

TEST_CASE("object counts stay inside the configured range") {
    const PlantedRule rule = base_rule();
    std::size_t lo = 99, hi = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const Scene s = generate_scene(rule, seed, "r");
        lo = std::min(lo, s.annotations.size());
        hi = std::max(hi, s.annotations.size());
    }
    REQUIRE(lo >= 2);
    REQUIRE(hi <= 10);
    REQUIRE(lo == 2);   // both extremes actually occur across 200 scenes
    REQUIRE(hi == 10);
}

TEST_CASE("annotations carry the bin of their band") {
    const PlantedRule rule = base_rule(6);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Scene s = generate_scene(rule, seed, "b");
        for (const auto& a : s.annotations) {
            REQUIRE(band_bin_at(rule, a.box.cy) == a.bin);
            REQUIRE(a.category == "car");
            REQUIRE(a.score == 1.0);
        }
    }
}

TEST_CASE("random-bin mode decouples the bin from the band") {
    PlantedRule rule = base_rule(8);
    rule.random_bins = true;
    long agree = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        const Scene s = generate_scene(rule, seed, "d");
        for (const auto& a : s.annotations) {
            if (band_bin_at(rule, a.box.cy) == a.bin) ++agree;
            ++total;
        }
    }
    const double frac = static_cast<double>(agree) / static_cast<double>(total);
    REQUIRE(frac > 0.125 - 0.04);
    REQUIRE(frac < 0.125 + 0.04);
}

TEST_CASE("false positives are kept clear of every annotation") {
    PlantedRule rule = base_rule();
    rule.fp_rate = 3.0;
    long n_fp = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Scene s = generate_scene(rule, seed, "f");
        for (std::size_t i = s.annotations.size(); i < s.hypotheses.size(); ++i) {
            ++n_fp;
            for (const auto& a : s.annotations)
                REQUIRE(iou(s.hypotheses[i].box, a.box) < 0.3);
        }
    }
    REQUIRE(n_fp > 100);  // the Poisson clutter really fires
}

TEST_CASE("the generator validates its configuration") {
    PlantedRule no_bands = base_rule();
    no_bands.lane_bands.clear();
    REQUIRE_THROWS_AS(generate_scene(no_bands, 1, "x"), ConfigError);

    PlantedRule one_bin = base_rule();
    one_bin.k = 1;
    REQUIRE_THROWS_AS(generate_scene(one_bin, 1, "x"), ConfigError);

    PlantedRule narrow = base_rule();
    narrow.lane_bands = {{0.0, 30.0, 0}};  // thinner than the object height
    REQUIRE_THROWS_AS(generate_scene(narrow, 1, "x"), ConfigError);
}

TEST_CASE("dataset splits are deterministic, disjoint, and sized by fractions") {
    const PlantedRule rule = base_rule();
    const SceneSplits a = generate_scenes(rule, 90, 7);
    const SceneSplits b = generate_scenes(rule, 90, 7);
    REQUIRE(a.train.size() == 30);
    REQUIRE(a.val.size() == 30);
    REQUIRE(a.test.size() == 30);
    REQUIRE(same_scene(a.train[0], b.train[0]));
    REQUIRE(same_scene(a.test[29], b.test[29]));

    std::set<std::string> ids;
    for (const auto* split : {&a.train, &a.val, &a.test})
        for (const auto& s : *split) ids.insert(s.image_id);
    REQUIRE(ids.size() == 90);

    const SceneSplits skew = generate_scenes(rule, 10, 7, {0.6, 0.2, 0.2});
    REQUIRE(skew.train.size() == 6);
    REQUIRE(skew.val.size() == 2);
    REQUIRE(skew.test.size() == 2);

    REQUIRE_THROWS_AS(generate_scenes(rule, 2, 7), ConfigError);
    REQUIRE_THROWS_AS(generate_scenes(rule, 9, 7, {0.5, 0.5, 0.5}), ConfigError);
}

TEST_CASE("the linear-space posterior reference behaves on hand cases") {
    REQUIRE(oracle_posterior({0.4, 0.2, 0.4}, {0.5, 0.3, 0.2}) ==
            Catch::Approx(0.20 / 0.34).epsilon(1e-12));
    REQUIRE(oracle_posterior({0.1, 0.9, 0.9}, {1.0, 0.0, 0.0}) == 1.0);
    REQUIRE(oracle_posterior({0.7, 0.7, 0.7}, {0.45, 0.35, 0.2}) ==
            Catch::Approx(0.45).epsilon(1e-12));
    REQUIRE_THROWS_AS(oracle_posterior({0.0, 0.0, 0.0}, {0.5, 0.3, 0.2}),
                      NumericalError);
}

TEST_CASE("the ranked-list references hit the closed-form extremes") {
    PlantedRule rule = base_rule();
    std::vector<Scene> perfect;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        perfect.push_back(generate_scene(rule, seed, "p" + std::to_string(seed)));
    REQUIRE(oracle_ap(perfect) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(oracle_avp(perfect) == Catch::Approx(1.0).margin(1e-12));

    std::vector<Scene> wrong = perfect;
    for (auto& s : wrong)
        for (auto& h : s.hypotheses) h.bin = (h.bin + 1) % rule.k;
    REQUIRE(oracle_ap(wrong) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(oracle_avp(wrong) == 0.0);

    REQUIRE(oracle_ap({}) == 0.0);
    REQUIRE(oracle_avp({}) == 0.0);
}
