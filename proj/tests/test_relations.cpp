#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "relview/relations.hpp"

using namespace relview;

namespace {

ObjectHypothesis obj(double cx, double cy, double w, double h, int bin = 0) {
    ObjectHypothesis o;
    o.category = "car";
    o.box = {cx, cy, w, h};
    o.bin = bin;
    o.score = 0.5;
    return o;
}

}  // namespace

TEST_CASE("relation of identical boxes is the identity offset") {
    const auto src = obj(100.0, 50.0, 40.0, 20.0, 0);
    const auto nbr = obj(100.0, 50.0, 40.0, 20.0, 2);
    const RelationVector r = relate(src, nbr, RelationFormat::RF1);
    REQUIRE(r.rx == 0.0);
    REQUIRE(r.ry == 0.0);
    REQUIRE(r.rsw == 1.0);
    REQUIRE(r.rsh == 1.0);
    REQUIRE(r.neighbor_viewpoint == 2);
}

TEST_CASE("relation components follow the relative-geometry formulas") {
    const auto src = obj(100.0, 50.0, 40.0, 20.0);
    const auto nbr = obj(180.0, 70.0, 80.0, 40.0);
    const RelationVector r = relate(src, nbr, RelationFormat::RF1);
    REQUIRE(r.rx == Catch::Approx(2.0).epsilon(1e-12));
    REQUIRE(r.ry == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(r.rsw == Catch::Approx(2.0).epsilon(1e-12));
    REQUIRE(r.rsh == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("the viewpoint-free format carries no neighbor bin") {
    const auto src = obj(100.0, 50.0, 40.0, 20.0);
    const auto nbr = obj(180.0, 70.0, 80.0, 40.0, 3);
    const RelationVector r = relate(src, nbr, RelationFormat::RF2);
    REQUIRE(r.neighbor_viewpoint == -1);
    REQUIRE(vectorize(r, RelationFormat::RF2, 8).size() == 4);
}

TEST_CASE("degenerate source geometry is rejected") {
    const auto nbr = obj(10.0, 10.0, 5.0, 5.0);
    REQUIRE_THROWS_AS(relate(obj(0.0, 0.0, 0.0, 5.0), nbr, RelationFormat::RF1),
                      DataError);
    REQUIRE_THROWS_AS(relate(obj(0.0, 0.0, 5.0, -1.0), nbr, RelationFormat::RF1),
                      DataError);
}

TEST_CASE("scene relation counts are m times m minus one") {
    Scene s;
    for (int m : {1, 3, 5}) {
        s.hypotheses.assign(static_cast<std::size_t>(m), obj(0.0, 0.0, 10.0, 10.0));
        for (int i = 0; i < m; ++i)
            s.hypotheses[static_cast<std::size_t>(i)].box.cx = 20.0 * i;
        const auto rels = extract_scene_relations(s, RelationFormat::RF1);
        REQUIRE(rels.size() == static_cast<std::size_t>(m * (m - 1)));
    }
}

TEST_CASE("relations are ordered pairs, not symmetric") {
    Scene s;
    s.hypotheses = {obj(0.0, 0.0, 10.0, 20.0), obj(30.0, 10.0, 20.0, 10.0)};
    const auto rels = extract_scene_relations(s, RelationFormat::RF2);
    REQUIRE(rels.size() == 2);
    REQUIRE(rels[0].rx != rels[1].rx);
    REQUIRE(rels[0].rsw == Catch::Approx(1.0 / rels[1].rsw).epsilon(1e-12));
}

TEST_CASE("feature encoding is the identity on the viewpoint-free format") {
    RelationVector r;
    r.rx = 2.0;
    r.ry = 1.0;
    r.rsw = 2.0;
    r.rsh = 2.0;
    r.neighbor_viewpoint = -1;
    const auto x = vectorize(r, RelationFormat::RF2, 8);
    REQUIRE(x == std::vector<double>{2.0, 1.0, 2.0, 2.0});
}

TEST_CASE("feature encoding appends the neighbor bin as circle coordinates") {
    const auto src = obj(0.0, 0.0, 10.0, 10.0);
    const auto x0 = vectorize(relate(src, obj(20.0, 0.0, 10.0, 10.0, 0),
                                     RelationFormat::RF1),
                              RelationFormat::RF1, 8);
    REQUIRE(x0.size() == 6);
    REQUIRE(x0[4] == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(x0[5] == Catch::Approx(0.0).margin(1e-12));
    const auto x2 = vectorize(relate(src, obj(20.0, 0.0, 10.0, 10.0, 2),
                                     RelationFormat::RF1),
                              RelationFormat::RF1, 8);
    REQUIRE(x2[4] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(x2[5] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("format names round-trip") {
    REQUIRE(relation_format_from_name("rf1") == RelationFormat::RF1);
    REQUIRE(relation_format_from_name("rf2") == RelationFormat::RF2);
    REQUIRE(std::string(relation_format_name(RelationFormat::RF1)) == "rf1");
    REQUIRE_THROWS_AS(relation_format_from_name("rf3"), ConfigError);
}

TEST_CASE("size ratios are always positive on random pairs") {
    std::mt19937_64 rng(19);
    for (int t = 0; t < 500; ++t) {
        ObjectHypothesis a = obj(0, 0, 1, 1), b = obj(0, 0, 1, 1, 1);
        a.box = testref::random_box(rng);
        b.box = testref::random_box(rng);
        const RelationVector r = relate(a, b, RelationFormat::RF1);
        REQUIRE(r.rsw > 0.0);
        REQUIRE(r.rsh > 0.0);
        REQUIRE(vectorize(r, RelationFormat::RF1, 8).size() == 6);
    }
}
