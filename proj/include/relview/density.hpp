#pragma once

// Kernel density estimation and the training procedure that turns matched
// scenes into the relational context model: one conditional density per
// (ordered category pair, hypothesis state), plus per-category state priors.
//
// Numerics: every density is evaluated in log space and posteriors are
// formed with log-sum-exp; products of many relation factors underflow in
// linear space long before they become uninformative.

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relview/errors.hpp"
#include "relview/relations.hpp"
#include "relview/scene.hpp"

namespace relview {

inline double log_sum_exp(const std::vector<double>& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;  // all -inf (or a stray +inf)
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// Equal-weight Gaussian mixture centered on the samples, one fixed
// bandwidth per dimension (diagonal kernel).
struct Kde {
    std::vector<std::vector<double>> samples;  // m rows of dimension d
    std::vector<double> bandwidth;             // d entries, all > 0

    int dim() const { return static_cast<int>(bandwidth.size()); }

    double log_eval(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != dim())
            throw ConfigError("density query has wrong dimension");
        const double log_norm = log_kernel_norm();
        std::vector<double> terms;
        terms.reserve(samples.size());
        for (const auto& s : samples) {
            double q = 0.0;
            for (std::size_t d = 0; d < s.size(); ++d) {
                const double z = (x[d] - s[d]) / bandwidth[d];
                q += z * z;
            }
            terms.push_back(-0.5 * q);
        }
        return log_sum_exp(terms) + log_norm - std::log(static_cast<double>(samples.size()));
    }

    double eval(const std::vector<double>& x) const { return std::exp(log_eval(x)); }

  private:
    double log_kernel_norm() const {
        double ln = -0.5 * dim() * std::log(2.0 * std::numbers::pi);
        for (double h : bandwidth) ln -= std::log(h);
        return ln;
    }
};

// Bandwidth floor: 1e-3 * (range + 1). The +1 keeps zero-variance
// dimensions (all identical samples) at a small positive width instead of
// collapsing the kernel to a spike.
inline double bandwidth_floor(double range) { return 1e-3 * (range + 1.0); }

inline Kde kde_fit_with_bandwidth(std::vector<std::vector<double>> points,
                                  std::vector<double> bandwidth) {
    if (points.empty()) throw DataError("density fit requires at least one sample");
    const std::size_t d = points.front().size();
    if (bandwidth.size() != d) throw ConfigError("bandwidth dimension mismatch");
    for (const auto& p : points) {
        if (p.size() != d) throw ConfigError("sample dimension mismatch");
        for (double v : p)
            if (!std::isfinite(v)) throw DataError("non-finite sample in density fit");
    }
    for (double h : bandwidth)
        if (!(h > 0.0)) throw ConfigError("bandwidth entries must be positive");
    Kde k;
    k.samples = std::move(points);
    k.bandwidth = std::move(bandwidth);
    return k;
}

// Scott's rule per dimension: h_d = sigma_d * m^(-1/(d+4)) with the sample
// standard deviation (ddof 1), floored as above.
inline Kde kde_fit(std::vector<std::vector<double>> points) {
    if (points.empty()) throw DataError("density fit requires at least one sample");
    const std::size_t d = points.front().size();
    const std::size_t m = points.size();
    std::vector<double> h(d, 0.0);
    const double power = std::pow(static_cast<double>(m), -1.0 / (static_cast<double>(d) + 4.0));
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0, lo = points[0][j], hi = points[0][j];
        for (const auto& p : points) {
            if (p.size() != d) throw ConfigError("sample dimension mismatch");
            mean += p[j];
            lo = std::min(lo, p[j]);
            hi = std::max(hi, p[j]);
        }
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (const auto& p : points) var += (p[j] - mean) * (p[j] - mean);
        const double sigma = m > 1 ? std::sqrt(var / static_cast<double>(m - 1)) : 0.0;
        h[j] = std::max(sigma * power, bandwidth_floor(hi - lo));
    }
    return kde_fit_with_bandwidth(std::move(points), std::move(h));
}

// A conditional density cell. Cells with too few training points fall back
// to a uniform density over the pooled feature bounding box; the constant
// is improper on unbounded support but cancels consistently inside the
// Bayes ratios where cells are only ever compared.
struct Density {
    enum class Kind { Absent, Fitted, Uniform };
    Kind kind = Kind::Absent;
    Kde kde;                // Fitted
    double log_const = 0.0; // Uniform

    bool present() const { return kind != Kind::Absent; }

    double log_eval(const std::vector<double>& x) const {
        switch (kind) {
            case Kind::Fitted: return kde.log_eval(x);
            case Kind::Uniform: return log_const;
            default: throw NumericalError("evaluated an absent density cell");
        }
    }
};

inline Density density_from_kde(Kde k) {
    Density d;
    d.kind = Density::Kind::Fitted;
    d.kde = std::move(k);
    return d;
}

inline Density density_uniform(double log_const) {
    Density d;
    d.kind = Density::Kind::Uniform;
    d.log_const = log_const;
    return d;
}

// Axis-aligned bounding box of a feature pool; provides the uniform
// fallback constant. Degenerate sides are widened to 1e-3 so the volume
// stays positive.
struct FeatureBox {
    std::vector<double> lo, hi;

    bool valid() const { return !lo.empty(); }

    void expand(const std::vector<double>& x) {
        if (lo.empty()) {
            lo = x;
            hi = x;
            return;
        }
        for (std::size_t d = 0; d < x.size(); ++d) {
            lo[d] = std::min(lo[d], x[d]);
            hi[d] = std::max(hi[d], x[d]);
        }
    }

    double log_uniform_const() const {
        if (!valid()) throw NumericalError("uniform fallback over an empty feature pool");
        double lc = 0.0;
        for (std::size_t d = 0; d < lo.size(); ++d)
            lc -= std::log(std::max(hi[d] - lo[d], 1e-3));
        return lc;
    }
};

// The three admissible hypothesis states, in fixed order:
//   0: correct viewpoint on a localized detection
//   1: wrong viewpoint on a localized detection
//   2: false-positive detection
// The fourth combination (correct viewpoint, unlocalized) has prior zero by
// definition and never appears.
enum HypState : int { kStateCorrect = 0, kStateWrongBin = 1, kStateFalsePos = 2 };

inline int hypothesis_state_index(const HypothesisState& s) {
    if (!s.localized) return kStateFalsePos;
    return s.correct_bin ? kStateCorrect : kStateWrongBin;
}

struct StatePriors {
    double p_pp = 0.0;  // correct viewpoint, localized
    double p_mp = 0.0;  // wrong viewpoint, localized
    double p_mm = 0.0;  // false positive

    double at(int state) const {
        switch (state) {
            case kStateCorrect: return p_pp;
            case kStateWrongBin: return p_mp;
            default: return p_mm;
        }
    }
};

// Posterior p(state 0 | evidence) over the three admissible states from
// per-state log likelihoods and priors, via log-sum-exp. If every term
// underflows to -inf the evidence is useless and the prior is returned.
inline double state_posterior(const std::array<double, 3>& log_lik,
                              const StatePriors& priors) {
    std::vector<double> terms(3);
    for (int s = 0; s < 3; ++s) {
        const double p = priors.at(s);
        terms[s] = p > 0.0 ? log_lik[s] + std::log(p)
                           : -std::numeric_limits<double>::infinity();
    }
    const double log_z = log_sum_exp(terms);
    if (!std::isfinite(log_z)) return priors.p_pp;
    return std::exp(terms[kStateCorrect] - log_z);
}

// All three state posteriors (sum to 1 up to rounding).
inline std::array<double, 3> state_posteriors(const std::array<double, 3>& log_lik,
                                              const StatePriors& priors) {
    std::vector<double> terms(3);
    for (int s = 0; s < 3; ++s) {
        const double p = priors.at(s);
        terms[s] = p > 0.0 ? log_lik[s] + std::log(p)
                           : -std::numeric_limits<double>::infinity();
    }
    const double log_z = log_sum_exp(terms);
    if (!std::isfinite(log_z)) return {priors.p_pp, priors.p_mp, priors.p_mm};
    return {std::exp(terms[0] - log_z), std::exp(terms[1] - log_z),
            std::exp(terms[2] - log_z)};
}

// Densities for one ordered category pair. The correct-state family is
// additionally indexed by the source object's true viewpoint bin; that is
// what makes the relational vote depend on the candidate bin. The index is
// only populated for RF1 (for RF2 it degenerates to the bin-marginal
// density). The wrong-bin and false-positive families stay bin-marginal: a
// false positive has no true bin, and a wrong-viewpoint source tells us
// nothing about which bin was claimed.
struct PairDensities {
    Density pp;                          // bin-marginal correct-state density
    Density mp;                          // wrong viewpoint, localized
    Density mm;                          // false positive
    std::vector<Density> pp_by_bin;      // K entries when populated, else empty
    FeatureBox box;                      // pooled features, all states

    bool any_data() const { return box.valid(); }
};

struct RelationalModel {
    RelationFormat format = RelationFormat::RF1;
    int k = 0;
    int min_samples = 5;
    std::vector<std::string> categories;  // sorted, unique
    std::map<std::pair<std::string, std::string>, PairDensities> pairs;
    std::map<std::string, StatePriors> priors;
};

namespace detail {

inline Density fit_cell(const std::vector<std::vector<double>>& pool,
                        const FeatureBox& box, int min_samples) {
    if (static_cast<int>(pool.size()) >= min_samples)
        return density_from_kde(kde_fit(pool));
    if (box.valid()) return density_uniform(box.log_uniform_const());
    return Density{};
}

}  // namespace detail

// Fits the relational context model from matched training scenes.
//
// Training pool construction: every hypothesis flagged correct (right bin,
// localized) is replaced by its matched annotation, so the relations it
// induces are recomputed from ground-truth geometry; all ordered pairs over
// the substituted set are then pooled per (source category, target
// category) and per the source's state. Priors are the per-category state
// proportions over the flagged hypotheses.
inline RelationalModel fit_relational_model(const std::vector<Scene>& train_scenes,
                                            RelationFormat fmt, int k,
                                            int min_samples = 5) {
    if (train_scenes.empty()) throw DataError("no training scenes");
    if (k < 2) throw ConfigError("viewpoint bin count must be >= 2");

    RelationalModel model;
    model.format = fmt;
    model.k = k;
    model.min_samples = min_samples;

    std::set<std::string> cats;
    std::map<std::string, std::array<long, 3>> state_counts;
    using PairKey = std::pair<std::string, std::string>;
    struct PairPool {
        std::array<std::vector<std::vector<double>>, 3> by_state;
        std::vector<std::vector<std::vector<double>>> pp_by_bin;
        FeatureBox box;
    };
    std::map<PairKey, PairPool> pools;

    for (const Scene& scene : train_scenes) {
        for (const auto& a : scene.annotations) cats.insert(a.category);

        // Substituted working set: correct hypotheses become their matched
        // annotations (carrying the true bin), everything else stays as
        // detected. Each element keeps the source state of the original.
        std::vector<const ObjectHypothesis*> objs;
        std::vector<int> states;
        objs.reserve(scene.hypotheses.size());
        for (const auto& h : scene.hypotheses) {
            if (!h.state) throw DataError("training scenes must be matched first");
            cats.insert(h.category);
            const int st = hypothesis_state_index(*h.state);
            state_counts[h.category][static_cast<std::size_t>(st)]++;
            if (st == kStateCorrect)
                objs.push_back(&scene.annotations[static_cast<std::size_t>(
                    h.state->matched_annotation)]);
            else
                objs.push_back(&h);
            states.push_back(st);
        }

        for (std::size_t i = 0; i < objs.size(); ++i) {
            for (std::size_t j = 0; j < objs.size(); ++j) {
                if (i == j) continue;
                const RelationVector r = relate(*objs[i], *objs[j], fmt);
                std::vector<double> x = vectorize(r, fmt, k);
                PairPool& pool = pools[{r.source_category, r.target_category}];
                pool.box.expand(x);
                const int st = states[i];
                if (st == kStateCorrect && fmt == RelationFormat::RF1) {
                    if (pool.pp_by_bin.empty()) pool.pp_by_bin.resize(static_cast<std::size_t>(k));
                    pool.pp_by_bin[static_cast<std::size_t>(objs[i]->bin)].push_back(x);
                }
                pool.by_state[static_cast<std::size_t>(st)].push_back(std::move(x));
            }
        }
    }

    model.categories.assign(cats.begin(), cats.end());
    for (const auto& c : model.categories) {
        const auto it = state_counts.find(c);
        const long total = it == state_counts.end()
                               ? 0
                               : it->second[0] + it->second[1] + it->second[2];
        if (total == 0)
            throw DataError("category '" + c + "' has no training hypotheses");
        StatePriors p;
        p.p_pp = static_cast<double>(it->second[0]) / static_cast<double>(total);
        p.p_mp = static_cast<double>(it->second[1]) / static_cast<double>(total);
        p.p_mm = static_cast<double>(it->second[2]) / static_cast<double>(total);
        model.priors[c] = p;
    }

    // One entry per ordered category pair, including pairs never observed.
    for (const auto& ci : model.categories) {
        for (const auto& cj : model.categories) {
            PairDensities cell;
            const auto it = pools.find({ci, cj});
            if (it != pools.end()) {
                PairPool& pool = it->second;
                cell.box = pool.box;
                cell.pp = detail::fit_cell(pool.by_state[0], pool.box, min_samples);
                cell.mp = detail::fit_cell(pool.by_state[1], pool.box, min_samples);
                cell.mm = detail::fit_cell(pool.by_state[2], pool.box, min_samples);
                if (!pool.pp_by_bin.empty()) {
                    cell.pp_by_bin.resize(static_cast<std::size_t>(k));
                    for (int b = 0; b < k; ++b)
                        cell.pp_by_bin[static_cast<std::size_t>(b)] = detail::fit_cell(
                            pool.pp_by_bin[static_cast<std::size_t>(b)], pool.box,
                            min_samples);
                }
            }
            model.pairs[{ci, cj}] = std::move(cell);
        }
    }
    return model;
}

}  // namespace relview
