#pragma once

// Viewpoint-aware detection metrics. MPPE is the mean diagonal of the
// row-normalized confusion matrix (equivalently the unweighted mean of
// per-class recalls); AVP is average precision where a true positive must
// also carry the correct viewpoint bin. Both are paired with brute-force
// oracles in the test suite.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "relview/errors.hpp"
#include "relview/scene.hpp"

namespace relview {

using ConfusionMatrix = std::vector<std::vector<long>>;

inline ConfusionMatrix make_confusion(int k) {
    return ConfusionMatrix(static_cast<std::size_t>(k),
                           std::vector<long>(static_cast<std::size_t>(k), 0));
}

// Accumulates (true bin, predicted bin) over the localized hypotheses of
// matched scenes; false positives have no true bin and are excluded.
inline ConfusionMatrix confusion_from_scenes(const std::vector<Scene>& scenes, int k) {
    ConfusionMatrix cm = make_confusion(k);
    for (const Scene& s : scenes) {
        for (const auto& h : s.hypotheses) {
            if (!h.state || !h.state->localized) continue;
            const int t = s.annotations[static_cast<std::size_t>(
                                            h.state->matched_annotation)].bin;
            if (t < 0 || t >= k || h.bin < 0 || h.bin >= k)
                throw DataError("viewpoint bin outside the configured range");
            cm[static_cast<std::size_t>(t)][static_cast<std::size_t>(h.bin)]++;
        }
    }
    return cm;
}

// Mean over classes with at least one true instance of the row-normalized
// diagonal. Classes never observed are excluded rather than counted as 0.
inline double mppe(const ConfusionMatrix& cm) {
    double sum = 0.0;
    int classes = 0;
    for (std::size_t r = 0; r < cm.size(); ++r) {
        const long row = std::accumulate(cm[r].begin(), cm[r].end(), 0L);
        if (row == 0) continue;
        sum += static_cast<double>(cm[r][r]) / static_cast<double>(row);
        ++classes;
    }
    if (classes == 0) throw DataError("confusion matrix has no true instances");
    return sum / static_cast<double>(classes);
}

enum class ErrorKind { Correct, Nearby, Opposite, Other };

// Error taxonomy on circular bin distance d: 0 is correct, 1 is a
// neighboring viewpoint, half a turn is the opposite viewpoint, the rest is
// other. The nearby check precedes the opposite check, which decides K=2;
// for odd K the opposite case is unreachable.
inline ErrorKind classify_error(int true_bin, int pred_bin, int k) {
    const int d = bin_distance(true_bin, pred_bin, k);
    if (d == 0) return ErrorKind::Correct;
    if (d == 1) return ErrorKind::Nearby;
    if (2 * d == k) return ErrorKind::Opposite;
    return ErrorKind::Other;
}

struct TaxonomyCounts {
    long correct = 0;
    long nearby = 0;
    long opposite = 0;
    long other = 0;

    long total() const { return correct + nearby + opposite + other; }
};

inline TaxonomyCounts taxonomy_from_scenes(const std::vector<Scene>& scenes, int k) {
    TaxonomyCounts t;
    for (const Scene& s : scenes) {
        for (const auto& h : s.hypotheses) {
            if (!h.state || !h.state->localized) continue;
            const int tb = s.annotations[static_cast<std::size_t>(
                                             h.state->matched_annotation)].bin;
            switch (classify_error(tb, h.bin, k)) {
                case ErrorKind::Correct: t.correct++; break;
                case ErrorKind::Nearby: t.nearby++; break;
                case ErrorKind::Opposite: t.opposite++; break;
                case ErrorKind::Other: t.other++; break;
            }
        }
    }
    return t;
}

struct PrResult {
    double ap = 0.0;
    double avp = 0.0;
};

// Precision-recall over the globally ranked hypothesis list (score
// descending, ties keep scene-then-input order). Annotation claiming is the
// per-scene greedy matching at the given IoU threshold (recomputed here, so
// callers may pass unmatched scenes); a localized hypothesis with the wrong
// bin is a false positive for AVP but still claims its annotation, so AVP
// can only lose true positives relative to AP and avp <= ap always. Area
// under PR uses all-points interpolation (precision envelope).
inline PrResult detection_pr(const std::vector<Scene>& scenes,
                             double iou_threshold = 0.5) {
    long n_annotations = 0;
    for (const Scene& s : scenes)
        n_annotations += static_cast<long>(s.annotations.size());
    if (n_annotations == 0) throw DataError("precision-recall needs annotations");

    struct Entry {
        double score;
        bool tp_loc;
        bool tp_bin;
    };
    std::vector<Entry> entries;
    for (const Scene& raw : scenes) {
        const Scene s = match_scene(raw, iou_threshold);
        for (const auto& h : s.hypotheses)
            entries.push_back({h.score, h.state->localized,
                               h.state->localized && h.state->correct_bin});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });

    const auto area = [&](auto is_tp) {
        const std::size_t n = entries.size();
        std::vector<double> precision(n), recall(n);
        long tp = 0;
        for (std::size_t t = 0; t < n; ++t) {
            if (is_tp(entries[t])) ++tp;
            precision[t] = static_cast<double>(tp) / static_cast<double>(t + 1);
            recall[t] = static_cast<double>(tp) / static_cast<double>(n_annotations);
        }
        // Suffix max turns precision into its monotone envelope.
        for (std::size_t t = n; t-- > 1;)
            precision[t - 1] = std::max(precision[t - 1], precision[t]);
        double ap = 0.0, prev_recall = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            if (recall[t] > prev_recall) {
                ap += (recall[t] - prev_recall) * precision[t];
                prev_recall = recall[t];
            }
        }
        return ap;
    };

    PrResult r;
    r.ap = entries.empty() ? 0.0 : area([](const Entry& e) { return e.tp_loc; });
    r.avp = entries.empty() ? 0.0 : area([](const Entry& e) { return e.tp_bin; });
    return r;
}

inline double avp(const std::vector<Scene>& matched_scenes, double iou_threshold = 0.5) {
    return detection_pr(matched_scenes, iou_threshold).avp;
}

struct LowHighSplit {
    std::vector<Scene> low;
    std::vector<Scene> high;
    int threshold = 0;
};

// Splits scenes at an annotated-object-count threshold; images at or below
// the threshold are Low. Default threshold: the rounded mean count.
inline LowHighSplit split_low_high(const std::vector<Scene>& scenes,
                                   std::optional<int> threshold = std::nullopt) {
    LowHighSplit out;
    if (threshold) {
        out.threshold = *threshold;
    } else {
        if (scenes.empty()) throw DataError("cannot infer a split threshold from no scenes");
        double mean = 0.0;
        for (const Scene& s : scenes) mean += static_cast<double>(s.annotations.size());
        mean /= static_cast<double>(scenes.size());
        out.threshold = static_cast<int>(std::llround(mean));
    }
    for (const Scene& s : scenes) {
        if (static_cast<long>(s.annotations.size()) <= out.threshold)
            out.low.push_back(s);
        else
            out.high.push_back(s);
    }
    return out;
}

struct SubReport {
    long n_scenes = 0;
    long n_annotations = 0;
    long n_hypotheses = 0;
    double mppe = 0.0;
    bool mppe_valid = false;
    double ap = 0.0;
    double avp = 0.0;
    TaxonomyCounts taxonomy;
};

struct EvalReport {
    int k = 0;
    SubReport overall;
    int split_threshold = 0;
    bool has_low = false, has_high = false;
    SubReport low, high;
};

namespace detail {

inline SubReport sub_report(const std::vector<Scene>& matched, int k,
                            double iou_threshold) {
    SubReport r;
    r.n_scenes = static_cast<long>(matched.size());
    for (const Scene& s : matched) {
        r.n_annotations += static_cast<long>(s.annotations.size());
        r.n_hypotheses += static_cast<long>(s.hypotheses.size());
    }
    const ConfusionMatrix cm = confusion_from_scenes(matched, k);
    bool any = false;
    for (const auto& row : cm)
        for (long v : row) any = any || v != 0;
    if (any) {
        r.mppe = mppe(cm);
        r.mppe_valid = true;
    }
    if (r.n_annotations > 0) {
        const PrResult pr = detection_pr(matched, iou_threshold);
        r.ap = pr.ap;
        r.avp = pr.avp;
    }
    r.taxonomy = taxonomy_from_scenes(matched, k);
    return r;
}

}  // namespace detail

// Full metric report over scenes carrying predicted bins. Matching against
// annotations happens here at the given IoU threshold.
inline EvalReport build_report(const std::vector<Scene>& scenes, int k,
                               double iou_threshold = 0.5,
                               std::optional<int> split_threshold = std::nullopt) {
    if (scenes.empty()) throw DataError("no scenes to evaluate");
    std::vector<Scene> matched;
    matched.reserve(scenes.size());
    for (const Scene& s : scenes) matched.push_back(match_scene(s, iou_threshold));
    EvalReport report;
    report.k = k;
    report.overall = detail::sub_report(matched, k, iou_threshold);
    const LowHighSplit split = split_low_high(matched, split_threshold);
    report.split_threshold = split.threshold;
    const auto has_annotations = [](const std::vector<Scene>& v) {
        return std::any_of(v.begin(), v.end(),
                           [](const Scene& s) { return !s.annotations.empty(); });
    };
    if (!split.low.empty() && has_annotations(split.low)) {
        report.low = detail::sub_report(split.low, k, iou_threshold);
        report.has_low = true;
    }
    if (!split.high.empty() && has_annotations(split.high)) {
        report.high = detail::sub_report(split.high, k, iou_threshold);
        report.has_high = true;
    }
    return report;
}

}  // namespace relview
