#pragma once

// Scene-level data model: boxes, viewpoint bins, hypothesis/annotation
// matching. Annotations and detector hypotheses share one type; an
// annotation is a hypothesis with score 1 and its bin taken as ground truth.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "relview/errors.hpp"

namespace relview {

// Axis-aligned box, center parameterization, pixel units.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

// Intersection-over-union. Degenerate overlap (empty intersection or empty
// union) returns 0 rather than erroring.
inline double iou(const BBox& a, const BBox& b) {
    const double iw = std::min(a.cx + a.w / 2.0, b.cx + b.w / 2.0) -
                      std::max(a.cx - a.w / 2.0, b.cx - b.w / 2.0);
    const double ih = std::min(a.cy + a.h / 2.0, b.cy + b.h / 2.0) -
                      std::max(a.cy - a.h / 2.0, b.cy - b.h / 2.0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

// Maps an angle (radians, any finite value) to the nearest of K bin centers
// located at 2*pi*k/K. The scaled angle is rounded with floor(x + 0.5) so the
// map is exactly periodic and shifting by one bin width always moves the
// result by one bin.
inline int discretize_viewpoint(double theta, int k) {
    if (k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    const double two_pi = 2.0 * std::numbers::pi;
    double t = std::fmod(theta, two_pi);
    if (t < 0.0) t += two_pi;
    const int bin = static_cast<int>(std::floor(t * k / two_pi + 0.5));
    return bin % k;  // t just below 2*pi rounds up to k; wrap to 0
}

// Center angle (radians in [0, 2*pi)) of a viewpoint bin.
inline double bin_center_angle(int bin, int k) {
    if (k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    return 2.0 * std::numbers::pi * static_cast<double>(bin % k) / k;
}

// Circular bin distance in steps, 0..K/2.
inline int bin_distance(int a, int b, int k) {
    const int d = std::abs(a - b) % k;
    return std::min(d, k - d);
}

// Outcome of matching one hypothesis against the annotations. "localized"
// means the box matched some annotation (a true positive detection);
// "correct_bin" additionally requires bin agreement. A correct bin on an
// unlocalized hypothesis is contradictory and rejected.
struct HypothesisState {
    bool localized = false;
    bool correct_bin = false;
    int matched_annotation = -1;  // index into Scene::annotations, -1 if none

    HypothesisState() = default;
    HypothesisState(bool loc, bool cbin, int matched)
        : localized(loc), correct_bin(cbin), matched_annotation(matched) {
        if (correct_bin && !localized)
            throw ConfigError("correct viewpoint on an unlocalized hypothesis");
    }
};

struct ObjectHypothesis {
    std::string category;
    BBox box;
    double score = 0.0;
    int bin = 0;

    // Optional per-bin local responses (length K when present); detectors
    // that emit only an argmax bin leave this empty.
    std::vector<double> local_scores;

    // Present only after match_scene.
    std::optional<HypothesisState> state;
};

struct Scene {
    std::string image_id;
    std::vector<ObjectHypothesis> hypotheses;
    std::vector<ObjectHypothesis> annotations;  // ground truth, score fixed to 1
};

// Greedy one-to-one matching in descending score order (ties keep input
// order). A hypothesis claims the unclaimed same-category annotation of
// highest IoU when that IoU reaches iou_threshold; unmatched or duplicate
// hypotheses are false positives.
inline Scene match_scene(Scene scene, double iou_threshold = 0.5) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
        throw ConfigError("iou threshold must lie in (0,1]");
    std::vector<std::size_t> order(scene.hypotheses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.hypotheses[a].score > scene.hypotheses[b].score;
    });
    std::vector<char> claimed(scene.annotations.size(), 0);
    for (std::size_t idx : order) {
        ObjectHypothesis& h = scene.hypotheses[idx];
        double best = 0.0;
        int best_j = -1;
        for (std::size_t j = 0; j < scene.annotations.size(); ++j) {
            if (claimed[j] || scene.annotations[j].category != h.category) continue;
            const double v = iou(h.box, scene.annotations[j].box);
            if (v > best) {
                best = v;
                best_j = static_cast<int>(j);
            }
        }
        if (best_j >= 0 && best >= iou_threshold) {
            claimed[static_cast<std::size_t>(best_j)] = 1;
            const bool cbin =
                h.bin == scene.annotations[static_cast<std::size_t>(best_j)].bin;
            h.state = HypothesisState(true, cbin, best_j);
        } else {
            h.state = HypothesisState(false, false, -1);
        }
    }
    return scene;
}

}  // namespace relview
