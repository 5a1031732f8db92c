#pragma once

// Pairwise relation vectors between a source object and a neighbor,
// expressed in the source's frame: offsets normalized by the source box
// size plus width/height ratios. Two formats: with the neighbor's viewpoint
// attribute (RF1) or geometry only (RF2).

#include <cmath>
#include <string>
#include <vector>

#include "relview/errors.hpp"
#include "relview/scene.hpp"

namespace relview {

enum class RelationFormat {
    RF1,  // geometry + neighbor viewpoint bin
    RF2,  // geometry only
};

struct RelationVector {
    double rx = 0.0;   // (cx_j - cx_i) / w_i
    double ry = 0.0;   // (cy_j - cy_i) / h_i
    double rsw = 0.0;  // w_j / w_i
    double rsh = 0.0;  // h_j / h_i
    int neighbor_viewpoint = -1;  // bin index; -1 iff format is RF2
    std::string source_category;
    std::string target_category;
};

inline RelationVector relate(const ObjectHypothesis& src,
                             const ObjectHypothesis& nbr, RelationFormat fmt) {
    if (src.box.w <= 0.0 || src.box.h <= 0.0 || nbr.box.w <= 0.0 || nbr.box.h <= 0.0)
        throw DataError("relation requires positive box extents");
    RelationVector r;
    r.rx = (nbr.box.cx - src.box.cx) / src.box.w;
    r.ry = (nbr.box.cy - src.box.cy) / src.box.h;
    r.rsw = nbr.box.w / src.box.w;
    r.rsh = nbr.box.h / src.box.h;
    r.neighbor_viewpoint = (fmt == RelationFormat::RF1) ? nbr.bin : -1;
    r.source_category = src.category;
    r.target_category = nbr.category;
    return r;
}

// All ordered pairs over the scene's hypotheses: m(m-1) relations, no
// self-relations; fewer than two objects yields an empty list.
inline std::vector<RelationVector> extract_scene_relations(const Scene& scene,
                                                           RelationFormat fmt) {
    std::vector<RelationVector> out;
    const std::size_t m = scene.hypotheses.size();
    if (m < 2) return out;
    out.reserve(m * (m - 1));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) out.push_back(relate(scene.hypotheses[i], scene.hypotheses[j], fmt));
    return out;
}

// Numeric feature vector for density estimation. RF2 is the 4 geometry
// coordinates; RF1 appends the neighbor bin as unit-circle coordinates
// (cos, sin of the bin center) so that circular adjacency is preserved,
// giving 6 dimensions.
inline std::vector<double> vectorize(const RelationVector& r, RelationFormat fmt,
                                     int k) {
    std::vector<double> x = {r.rx, r.ry, r.rsw, r.rsh};
    if (fmt == RelationFormat::RF1) {
        if (r.neighbor_viewpoint < 0)
            throw ConfigError("relation lacks the neighbor viewpoint required by RF1");
        const double a = bin_center_angle(r.neighbor_viewpoint, k);
        x.push_back(std::cos(a));
        x.push_back(std::sin(a));
    }
    return x;
}

inline int relation_dim(RelationFormat fmt) {
    return fmt == RelationFormat::RF1 ? 6 : 4;
}

inline const char* relation_format_name(RelationFormat fmt) {
    return fmt == RelationFormat::RF1 ? "rf1" : "rf2";
}

inline RelationFormat relation_format_from_name(const std::string& s) {
    if (s == "rf1") return RelationFormat::RF1;
    if (s == "rf2") return RelationFormat::RF2;
    throw ConfigError("unknown relation format: " + s);
}

}  // namespace relview
