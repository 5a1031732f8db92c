#pragma once

// Synthetic scene generator with a planted relational rule, plus
// brute-force reference implementations of the posterior and the ranked
// precision-recall metrics. The planted rule is "objects in the same
// horizontal band share a viewpoint": a desk-scale stand-in for road-lane
// structure, with controllable geometry noise, label noise, and
// false-positive clutter.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/scene.hpp"

namespace relview {

// One horizontal pixel band carrying a viewpoint bin.
struct LaneBand {
    double y0 = 0.0;
    double y1 = 0.0;
    int bin = 0;
};

struct PlantedRule {
    int k = 4;
    std::vector<LaneBand> lane_bands;
    double sigma = 0.0;     // pixel noise on detector box centers
    double rho = 0.0;       // probability of corrupting a detector bin
    double fp_rate = 0.0;   // expected spurious hypotheses per scene
    bool random_bins = false;  // true: bins independent of geometry (no signal)
    std::string category = "car";

    double canvas_w = 1000.0;
    double canvas_h = 600.0;
    double obj_w = 60.0;
    double obj_h = 40.0;
    double tp_score_mean = 0.8, tp_score_sd = 0.08;
    double fp_score_mean = 0.3, fp_score_sd = 0.10;
    int min_objects = 2, max_objects = 10;
};

// Equal horizontal bands over the canvas, band i carrying bin i.
inline std::vector<LaneBand> equal_lane_bands(int k, double canvas_h = 600.0) {
    std::vector<LaneBand> bands;
    for (int i = 0; i < k; ++i) {
        const double step = canvas_h / static_cast<double>(k);
        bands.push_back({step * i, step * (i + 1), i});
    }
    return bands;
}

namespace detail {

// splitmix64: decorrelates per-scene streams from (seed, scene index).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace detail

// One scene: 2..10 objects dropped into bands (same band means same true
// bin, unless random_bins decouples them), one noisy detector hypothesis
// per object with the bin corrupted with probability rho, plus Poisson
// false positives kept clear of the annotations.
inline Scene generate_scene(const PlantedRule& rule, std::uint64_t seed,
                            const std::string& image_id) {
    if (rule.lane_bands.empty()) throw ConfigError("planted rule needs lane bands");
    if (rule.k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    std::mt19937_64 rng(seed);
    Scene scene;
    scene.image_id = image_id;

    std::uniform_int_distribution<int> n_dist(rule.min_objects, rule.max_objects);
    std::uniform_int_distribution<std::size_t> band_dist(0, rule.lane_bands.size() - 1);
    std::uniform_int_distribution<int> bin_dist(0, rule.k - 1);
    // normal_distribution forbids a zero sigma, and the noiseless limit must
    // reproduce annotation boxes exactly, so zero skips the draw entirely.
    std::normal_distribution<double> jitter_dist(0.0, rule.sigma > 0.0 ? rule.sigma : 1.0);
    const auto jitter = [&]() { return rule.sigma > 0.0 ? jitter_dist(rng) : 0.0; };
    const double margin_x = rule.obj_w / 2.0 + 1.0;
    std::uniform_real_distribution<double> x_dist(margin_x, rule.canvas_w - margin_x);

    const int n = n_dist(rng);
    for (int i = 0; i < n; ++i) {
        const LaneBand& band = rule.lane_bands[band_dist(rng)];
        if (band.y1 - band.y0 <= rule.obj_h)
            throw ConfigError("lane band too narrow for the object height");
        std::uniform_real_distribution<double> y_dist(band.y0 + rule.obj_h / 2.0,
                                                      band.y1 - rule.obj_h / 2.0);
        ObjectHypothesis a;
        a.category = rule.category;
        a.box = {x_dist(rng), y_dist(rng), rule.obj_w, rule.obj_h};
        a.bin = rule.random_bins ? bin_dist(rng) : band.bin;
        a.score = 1.0;
        scene.annotations.push_back(a);
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> tp_score(rule.tp_score_mean, rule.tp_score_sd);
    std::normal_distribution<double> fp_score(rule.fp_score_mean, rule.fp_score_sd);
    for (const auto& a : scene.annotations) {
        ObjectHypothesis h;
        h.category = rule.category;
        h.box = {a.box.cx + jitter(), a.box.cy + jitter(), rule.obj_w, rule.obj_h};
        h.bin = a.bin;
        if (rule.rho > 0.0 && unit(rng) < rule.rho) {
            // Corruption always moves off the true bin.
            const int shift = 1 + static_cast<int>(unit(rng) * (rule.k - 1));
            h.bin = (a.bin + std::min(shift, rule.k - 1)) % rule.k;
        }
        h.score = detail::clamp01(tp_score(rng));
        scene.hypotheses.push_back(h);
    }

    std::poisson_distribution<int> fp_count(rule.fp_rate);
    const int n_fp = rule.fp_rate > 0.0 ? fp_count(rng) : 0;
    std::uniform_real_distribution<double> y_any(rule.obj_h / 2.0,
                                                 rule.canvas_h - rule.obj_h / 2.0);
    for (int i = 0; i < n_fp; ++i) {
        ObjectHypothesis h;
        h.category = rule.category;
        h.bin = bin_dist(rng);
        h.score = detail::clamp01(fp_score(rng));
        // Keep clutter visually separate from real objects so its state is
        // unambiguous. Give up after a bounded number of rejections.
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            h.box = {x_dist(rng), y_any(rng), rule.obj_w, rule.obj_h};
            placed = true;
            for (const auto& a : scene.annotations)
                if (iou(h.box, a.box) >= 0.3) placed = false;
        }
        if (placed) scene.hypotheses.push_back(h);
    }
    return scene;
}

struct SceneSplits {
    std::vector<Scene> train, val, test;
};

// Deterministic dataset: scene i draws its own generator stream from the
// master seed, and the split takes the first fractions[0] share as train,
// the next as validation, the rest as test.
inline SceneSplits generate_scenes(const PlantedRule& rule, int n_scenes,
                                   std::uint64_t seed,
                                   std::array<double, 3> fractions = {1.0 / 3.0,
                                                                      1.0 / 3.0,
                                                                      1.0 / 3.0}) {
    if (n_scenes < 3) throw ConfigError("need at least 3 scenes to split");
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    std::vector<Scene> all;
    all.reserve(static_cast<std::size_t>(n_scenes));
    for (int i = 0; i < n_scenes; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "%03d_%06d", i / 1000, i % 1000);
        all.push_back(generate_scene(
            rule, detail::splitmix64(seed ^ (0x51ed2701ULL + static_cast<std::uint64_t>(i) * 2654435761ULL)),
            id));
    }
    const int n_train = static_cast<int>(std::floor(fractions[0] * n_scenes));
    const int n_val = static_cast<int>(std::floor(fractions[1] * n_scenes));
    SceneSplits out;
    out.train.assign(all.begin(), all.begin() + n_train);
    out.val.assign(all.begin() + n_train, all.begin() + n_train + n_val);
    out.test.assign(all.begin() + n_train + n_val, all.end());
    return out;
}

// Direct linear-space evaluation of the three-state Bayes ratio; the
// reference for the log-space vote path.
inline double oracle_posterior(const std::array<double, 3>& conditionals,
                               const StatePriors& priors) {
    const double num = conditionals[0] * priors.p_pp;
    const double den = num + conditionals[1] * priors.p_mp + conditionals[2] * priors.p_mm;
    if (den <= 0.0) throw NumericalError("posterior denominator is zero");
    return num / den;
}

namespace oracle_detail {

struct RankedEntry {
    double score;
    bool tp_loc;
    bool tp_bin;
};

// Reproduces the documented claiming protocol step by step: greedy
// descending score within each scene, best-IoU unclaimed same-category
// annotation, claim regardless of bin agreement.
inline std::vector<RankedEntry> ranked_entries(const std::vector<Scene>& scenes,
                                               double threshold) {
    std::vector<RankedEntry> out;
    for (const Scene& s : scenes) {
        std::vector<int> order;
        for (int i = 0; i < static_cast<int>(s.hypotheses.size()); ++i) order.push_back(i);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return s.hypotheses[static_cast<std::size_t>(a)].score >
                   s.hypotheses[static_cast<std::size_t>(b)].score;
        });
        std::vector<char> claimed(s.annotations.size(), 0);
        std::vector<RankedEntry> per_hyp(s.hypotheses.size());
        for (int idx : order) {
            const auto& h = s.hypotheses[static_cast<std::size_t>(idx)];
            double best = 0.0;
            int best_j = -1;
            for (std::size_t j = 0; j < s.annotations.size(); ++j) {
                if (claimed[j] || s.annotations[j].category != h.category) continue;
                const double v = iou(h.box, s.annotations[j].box);
                if (v > best) {
                    best = v;
                    best_j = static_cast<int>(j);
                }
            }
            RankedEntry e{h.score, false, false};
            if (best_j >= 0 && best >= threshold) {
                claimed[static_cast<std::size_t>(best_j)] = 1;
                e.tp_loc = true;
                e.tp_bin = h.bin == s.annotations[static_cast<std::size_t>(best_j)].bin;
            }
            per_hyp[static_cast<std::size_t>(idx)] = e;
        }
        out.insert(out.end(), per_hyp.begin(), per_hyp.end());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedEntry& a, const RankedEntry& b) {
                         return a.score > b.score;
                     });
    return out;
}

// All-points interpolated area computed the slow way: at every rank the
// interpolated precision is re-derived by scanning the whole tail.
template <typename IsTp>
inline double brute_force_area(const std::vector<RankedEntry>& entries,
                               long n_annotations, IsTp is_tp) {
    const std::size_t n = entries.size();
    if (n == 0) return 0.0;
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        long tp_here = 0;
        for (std::size_t u = 0; u <= t; ++u)
            if (is_tp(entries[u])) ++tp_here;
        const double recall = static_cast<double>(tp_here) / static_cast<double>(n_annotations);
        if (recall <= prev_recall) continue;
        double p_best = 0.0;
        for (std::size_t v = t; v < n; ++v) {
            long tp_v = 0;
            for (std::size_t u = 0; u <= v; ++u)
                if (is_tp(entries[u])) ++tp_v;
            p_best = std::max(p_best, static_cast<double>(tp_v) / static_cast<double>(v + 1));
        }
        ap += (recall - prev_recall) * p_best;
        prev_recall = recall;
    }
    return ap;
}

}  // namespace oracle_detail

inline double oracle_avp(const std::vector<Scene>& scenes, double threshold = 0.5) {
    long n_annotations = 0;
    for (const Scene& s : scenes) n_annotations += static_cast<long>(s.annotations.size());
    if (n_annotations == 0) return 0.0;
    const auto entries = oracle_detail::ranked_entries(scenes, threshold);
    return oracle_detail::brute_force_area(
        entries, n_annotations, [](const oracle_detail::RankedEntry& e) { return e.tp_bin; });
}

inline double oracle_ap(const std::vector<Scene>& scenes, double threshold = 0.5) {
    long n_annotations = 0;
    for (const Scene& s : scenes) n_annotations += static_cast<long>(s.annotations.size());
    if (n_annotations == 0) return 0.0;
    const auto entries = oracle_detail::ranked_entries(scenes, threshold);
    return oracle_detail::brute_force_area(
        entries, n_annotations, [](const oracle_detail::RankedEntry& e) { return e.tp_loc; });
}

}  // namespace relview
