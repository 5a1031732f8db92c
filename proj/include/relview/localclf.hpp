#pragma once

// Probabilistic local classifier: turns a raw detector score into the
// probability that the hypothesis is a correctly-localized detection with
// the correct viewpoint. That posterior is the neighbor weight used by the
// relational stage. Scores are used raw; the Bayes inversion here is the
// calibration.

#include <array>
#include <map>
#include <string>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/scene.hpp"

namespace relview {

struct CategoryScoreDensities {
    std::array<Density, 3> by_state;  // indexed by HypState
    FeatureBox box;                   // observed score range
};

struct ScoreModel {
    std::map<std::string, CategoryScoreDensities> categories;
    std::map<std::string, StatePriors> priors;
};

// Per-category, per-state 1-d densities over the detector score, plus state
// priors from the same flagged proportions as the relational model.
inline ScoreModel fit_score_model(const std::vector<Scene>& train_scenes,
                                  int min_samples = 5) {
    if (train_scenes.empty()) throw DataError("no training scenes");
    std::map<std::string, std::array<std::vector<std::vector<double>>, 3>> pools;
    std::map<std::string, FeatureBox> boxes;
    std::map<std::string, std::array<long, 3>> counts;
    for (const Scene& scene : train_scenes) {
        for (const auto& h : scene.hypotheses) {
            if (!h.state) throw DataError("training scenes must be matched first");
            const int st = hypothesis_state_index(*h.state);
            counts[h.category][static_cast<std::size_t>(st)]++;
            std::vector<double> x = {h.score};
            boxes[h.category].expand(x);
            pools[h.category][static_cast<std::size_t>(st)].push_back(std::move(x));
        }
    }
    if (pools.empty()) throw DataError("training scenes contain no hypotheses");
    ScoreModel model;
    for (auto& [cat, by_state] : pools) {
        CategoryScoreDensities cell;
        cell.box = boxes[cat];
        for (int st = 0; st < 3; ++st)
            cell.by_state[static_cast<std::size_t>(st)] = detail::fit_cell(
                by_state[static_cast<std::size_t>(st)], cell.box, min_samples);
        model.categories[cat] = std::move(cell);
        const auto& c = counts[cat];
        const long total = c[0] + c[1] + c[2];
        StatePriors p;
        p.p_pp = static_cast<double>(c[0]) / static_cast<double>(total);
        p.p_mp = static_cast<double>(c[1]) / static_cast<double>(total);
        p.p_mm = static_cast<double>(c[2]) / static_cast<double>(total);
        model.priors[cat] = p;
    }
    return model;
}

// w = p(correct viewpoint, localized | score, category), in [0,1].
inline double local_weight(const ScoreModel& model, const ObjectHypothesis& o) {
    const auto it = model.categories.find(o.category);
    if (it == model.categories.end())
        throw DataError("unknown category in local classifier: " + o.category);
    const StatePriors& priors = model.priors.at(o.category);
    const std::vector<double> x = {o.score};
    std::array<double, 3> log_lik{};
    for (int st = 0; st < 3; ++st) {
        const Density& d = it->second.by_state[static_cast<std::size_t>(st)];
        // A state never seen in training has prior 0; its likelihood value
        // is irrelevant, so feed a neutral 0 rather than erroring on the
        // absent cell.
        log_lik[static_cast<std::size_t>(st)] =
            d.present() && priors.at(st) > 0.0 ? d.log_eval(x) : 0.0;
    }
    return state_posterior(log_lik, priors);
}

}  // namespace relview
