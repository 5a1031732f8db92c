#pragma once

// Context-based viewpoint classification. Each neighbor casts a Bayes vote
// for "this object is correctly localized with viewpoint bin alpha", and
// votes are aggregated per candidate bin as a weighted relational-neighbor
// average. Aggressive mode lets every neighbor vote at once; cautious mode
// grows a known set one object at a time, scoring each object only against
// objects more certain than itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/localclf.hpp"
#include "relview/relations.hpp"
#include "relview/scene.hpp"

namespace relview {

inline constexpr double kWeightFloor = 1e-6;

struct ContextualResponse {
    std::vector<double> scores;  // K entries, one per candidate bin
    int predicted_bin = 0;       // argmax, ties to the lowest index
    bool defined = false;        // false when no usable neighbors existed
};

// Promotion order of cautious inference plus the known-set snapshot in
// effect when each object was scored.
struct PromotionTrace {
    std::vector<int> order;
    std::vector<std::vector<int>> known_sets;
};

namespace detail {

inline int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
    return best;
}

inline ContextualResponse undefined_response(int k) {
    ContextualResponse r;
    r.scores.assign(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
    r.predicted_bin = 0;
    r.defined = false;
    return r;
}

}  // namespace detail

// One neighbor's votes for every candidate bin of the source object at
// once. The relation itself does not depend on the candidate; the candidate
// selects which correct-state conditional answers "is this bin right", so
// the wrong-bin and false-positive factors are shared across candidates.
// An unknown category pair contributes no relational evidence and the vote
// falls back to the prior alone.
inline std::vector<double> vote_vector(const RelationalModel& model,
                                       const ObjectHypothesis& o_i,
                                       const ObjectHypothesis& o_j) {
    const auto pit = model.priors.find(o_i.category);
    if (pit == model.priors.end())
        throw DataError("unknown category in relational model: " + o_i.category);
    const StatePriors& priors = pit->second;
    const auto cit = model.pairs.find({o_i.category, o_j.category});
    if (cit == model.pairs.end() || !cit->second.any_data())
        return std::vector<double>(static_cast<std::size_t>(model.k), priors.p_pp);

    const PairDensities& cell = cit->second;
    const RelationVector r = relate(o_i, o_j, model.format);
    const std::vector<double> x = vectorize(r, model.format, model.k);
    const double log_mp = cell.mp.present() ? cell.mp.log_eval(x) : 0.0;
    const double log_mm = cell.mm.present() ? cell.mm.log_eval(x) : 0.0;
    const double log_pp_marginal = cell.pp.present() ? cell.pp.log_eval(x) : 0.0;

    std::vector<double> votes(static_cast<std::size_t>(model.k));
    for (int a = 0; a < model.k; ++a) {
        double log_pp = log_pp_marginal;
        if (!cell.pp_by_bin.empty() &&
            cell.pp_by_bin[static_cast<std::size_t>(a)].present())
            log_pp = cell.pp_by_bin[static_cast<std::size_t>(a)].log_eval(x);
        votes[static_cast<std::size_t>(a)] =
            state_posterior({log_pp, log_mp, log_mm}, priors);
    }
    return votes;
}

// Single-candidate Bayes vote, in [0,1].
inline double vote(const RelationalModel& model, const ObjectHypothesis& o_i,
                   int candidate_bin, const ObjectHypothesis& o_j) {
    if (candidate_bin < 0 || candidate_bin >= model.k)
        throw ConfigError("candidate bin out of range");
    return vote_vector(model, o_i, o_j)[static_cast<std::size_t>(candidate_bin)];
}

// Weighted relational-neighbor aggregation with explicit neighbor weights.
// Scores are weight-normalized, so uniform weight scaling cancels exactly.
inline std::vector<ContextualResponse> wvrn_aggressive_weighted(
    const Scene& scene, const RelationalModel& model,
    const std::vector<double>& weights) {
    const std::size_t m = scene.hypotheses.size();
    if (weights.size() != m)
        throw ConfigError("one neighbor weight per hypothesis required");
    std::vector<ContextualResponse> out(m, detail::undefined_response(model.k));
    if (m < 2) return out;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> acc(static_cast<std::size_t>(model.k), 0.0);
        double z = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double w = std::max(weights[j], kWeightFloor);
            const std::vector<double> v =
                vote_vector(model, scene.hypotheses[i], scene.hypotheses[j]);
            for (int a = 0; a < model.k; ++a)
                acc[static_cast<std::size_t>(a)] += v[static_cast<std::size_t>(a)] * w;
            z += w;
        }
        ContextualResponse& r = out[i];
        for (int a = 0; a < model.k; ++a)
            r.scores[static_cast<std::size_t>(a)] = acc[static_cast<std::size_t>(a)] / z;
        r.predicted_bin = detail::argmax_lowest(r.scores);
        r.defined = true;
    }
    return out;
}

inline std::vector<double> neighbor_weights(const Scene& scene,
                                            const ScoreModel& scores) {
    std::vector<double> w;
    w.reserve(scene.hypotheses.size());
    for (const auto& h : scene.hypotheses)
        w.push_back(std::max(local_weight(scores, h), kWeightFloor));
    return w;
}

inline std::vector<ContextualResponse> wvrn_aggressive(const Scene& scene,
                                                       const RelationalModel& model,
                                                       const ScoreModel& scores) {
    return wvrn_aggressive_weighted(scene, model, neighbor_weights(scene, scores));
}

// Cautious inference. The seed (highest local weight) is promoted first on
// local evidence alone; afterwards every remaining object is repeatedly
// scored against the known set only, and the one with the highest
// max-over-bins response is promoted with that response frozen. Since the
// seed never saw context, it is re-estimated at the end against the second
// promoted object. Ties promote the lower index.
inline std::pair<std::vector<ContextualResponse>, PromotionTrace> wvrn_cautious(
    const Scene& scene, const RelationalModel& model, const ScoreModel& scores) {
    const std::size_t m = scene.hypotheses.size();
    const int k = model.k;
    std::vector<ContextualResponse> out(m, detail::undefined_response(k));
    PromotionTrace trace;
    if (m == 0) return {out, trace};

    const std::vector<double> w = neighbor_weights(scene, scores);

    // All pairwise vote vectors up front; both the promotion ranking and the
    // final responses reuse them.
    std::vector<std::vector<std::vector<double>>> votes(m);
    for (std::size_t i = 0; i < m; ++i) {
        votes[i].resize(m);
        for (std::size_t j = 0; j < m; ++j)
            if (i != j)
                votes[i][j] = vote_vector(model, scene.hypotheses[i], scene.hypotheses[j]);
    }

    std::size_t seed = 0;
    for (std::size_t i = 1; i < m; ++i)
        if (w[i] > w[seed]) seed = i;

    std::vector<char> known(m, 0);
    std::vector<int> known_list;
    // Running weighted vote sums of every still-unknown object against the
    // known set; promotion only ever appends to that set.
    std::vector<std::vector<double>> acc(m, std::vector<double>(static_cast<std::size_t>(k), 0.0));
    std::vector<double> z(m, 0.0);

    auto promote = [&](std::size_t u, const ContextualResponse& response) {
        trace.known_sets.push_back(known_list);
        trace.order.push_back(static_cast<int>(u));
        out[u] = response;
        known[u] = 1;
        known_list.push_back(static_cast<int>(u));
        for (std::size_t v = 0; v < m; ++v) {
            if (known[v]) continue;
            for (int a = 0; a < k; ++a)
                acc[v][static_cast<std::size_t>(a)] +=
                    votes[v][u][static_cast<std::size_t>(a)] * w[u];
            z[v] += w[u];
        }
    };

    promote(seed, detail::undefined_response(k));

    while (known_list.size() < m) {
        std::size_t best = m;
        double best_max = -1.0;
        ContextualResponse best_resp;
        for (std::size_t u = 0; u < m; ++u) {
            if (known[u]) continue;
            ContextualResponse r;
            r.scores.resize(static_cast<std::size_t>(k));
            for (int a = 0; a < k; ++a)
                r.scores[static_cast<std::size_t>(a)] = acc[u][static_cast<std::size_t>(a)] / z[u];
            r.predicted_bin = detail::argmax_lowest(r.scores);
            r.defined = true;
            const double mx = r.scores[static_cast<std::size_t>(r.predicted_bin)];
            if (mx > best_max) {
                best_max = mx;
                best = u;
                best_resp = std::move(r);
            }
        }
        promote(best, best_resp);
    }

    // Seed re-estimation against the second promoted object alone.
    if (m >= 2) {
        const std::size_t second = static_cast<std::size_t>(trace.order[1]);
        ContextualResponse r;
        r.scores = votes[seed][second];
        r.predicted_bin = detail::argmax_lowest(r.scores);
        r.defined = true;
        out[seed] = r;
    }
    return {out, trace};
}

}  // namespace relview
