#pragma once

// Late fusion of the local and contextual channels. The coupled response
// concatenates the per-bin local response with the per-bin relational
// response; on top of it sit two alternative classifiers: MAP over
// per-class densities, and a Crammer-Singer linear multiclass SVM trained
// by dual coordinate descent.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/relclf.hpp"
#include "relview/scene.hpp"

namespace relview {

struct CoupledResponse {
    std::vector<double> local;       // K entries
    std::vector<double> contextual;  // K entries

    std::vector<double> concat() const {
        std::vector<double> psi = local;
        psi.insert(psi.end(), contextual.begin(), contextual.end());
        return psi;
    }
};

// Local half: the detector's per-bin scores when it provides them, else a
// score-scaled one-hot at the claimed bin. Contextual half: the relational
// response, or uniform when no context was available.
inline CoupledResponse build_coupled_response(const ObjectHypothesis& hyp,
                                              const ContextualResponse& ctx, int k) {
    if (k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    CoupledResponse psi;
    if (!hyp.local_scores.empty()) {
        if (static_cast<int>(hyp.local_scores.size()) != k)
            throw ConfigError("per-bin local scores do not match the bin count");
        psi.local = hyp.local_scores;
    } else {
        if (hyp.bin < 0 || hyp.bin >= k)
            throw ConfigError("hypothesis bin out of range");
        psi.local.assign(static_cast<std::size_t>(k), 0.0);
        psi.local[static_cast<std::size_t>(hyp.bin)] = hyp.score;
    }
    if (ctx.defined) {
        if (static_cast<int>(ctx.scores.size()) != k)
            throw ConfigError("contextual response does not match the bin count");
        psi.contextual = ctx.scores;
    } else {
        psi.contextual.assign(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k));
    }
    return psi;
}

// ---------------------------------------------------------------------------
// Probabilistic (MAP) fusion
// ---------------------------------------------------------------------------

struct ProbFusionModel {
    int k = 0;
    std::vector<Density> per_class;  // K densities over the 2K coupled features
    std::vector<double> priors;      // K entries, sum 1
};

inline ProbFusionModel fit_prob_fusion(
    const std::vector<std::pair<CoupledResponse, int>>& validation, int k,
    int min_samples = 5) {
    if (validation.empty()) throw DataError("no validation data for fusion");
    if (k < 2) throw ConfigError("viewpoint bin count must be >= 2");
    std::vector<std::vector<std::vector<double>>> pools(static_cast<std::size_t>(k));
    FeatureBox box;
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (const auto& [psi, bin] : validation) {
        if (bin < 0 || bin >= k) throw DataError("fusion label out of range");
        std::vector<double> x = psi.concat();
        if (static_cast<int>(x.size()) != 2 * k)
            throw ConfigError("coupled response does not match the bin count");
        box.expand(x);
        counts[static_cast<std::size_t>(bin)]++;
        pools[static_cast<std::size_t>(bin)].push_back(std::move(x));
    }
    ProbFusionModel model;
    model.k = k;
    model.per_class.resize(static_cast<std::size_t>(k));
    model.priors.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        model.per_class[static_cast<std::size_t>(c)] =
            detail::fit_cell(pools[static_cast<std::size_t>(c)], box, min_samples);
        model.priors[static_cast<std::size_t>(c)] =
            static_cast<double>(counts[static_cast<std::size_t>(c)]) /
            static_cast<double>(validation.size());
    }
    return model;
}

inline int predict_prob(const ProbFusionModel& model, const CoupledResponse& psi) {
    const std::vector<double> x = psi.concat();
    if (static_cast<int>(x.size()) != 2 * model.k)
        throw ConfigError("coupled response does not match the fusion model");
    std::vector<double> log_post(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c) {
        const double p = model.priors[static_cast<std::size_t>(c)];
        log_post[static_cast<std::size_t>(c)] =
            p > 0.0 ? model.per_class[static_cast<std::size_t>(c)].log_eval(x) + std::log(p)
                    : -std::numeric_limits<double>::infinity();
    }
    return detail::argmax_lowest(log_post);
}

// ---------------------------------------------------------------------------
// Linear (Crammer-Singer) fusion
// ---------------------------------------------------------------------------

struct LinearFusionModel {
    int k = 0;                            // number of classes
    std::vector<std::vector<double>> w;   // K rows over the feature dimension
    std::vector<double> bias;             // K entries
    double c = 1.0;                       // training cost that produced w
};

inline int predict_linear_features(const LinearFusionModel& model,
                                   const std::vector<double>& x) {
    if (model.w.empty() || model.w.front().size() != x.size())
        throw ConfigError("feature dimension does not match the linear model");
    std::vector<double> s(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c)
        s[static_cast<std::size_t>(c)] =
            std::inner_product(x.begin(), x.end(),
                               model.w[static_cast<std::size_t>(c)].begin(),
                               model.bias[static_cast<std::size_t>(c)]);
    return detail::argmax_lowest(s);
}

inline int predict_linear(const LinearFusionModel& model, const CoupledResponse& psi) {
    return predict_linear_features(model, psi.concat());
}

struct CrammerSingerResult {
    std::vector<std::vector<double>> w;   // n_class rows x dim
    std::vector<double> objective_trace;  // dual objective after each epoch
};

// Dual coordinate descent for the Crammer-Singer multiclass SVM:
//
//   min_alpha  1/2 sum_c ||w_c||^2 + sum_i sum_c e_i^c alpha_i^c
//   s.t.       sum_c alpha_i^c = 0,  alpha_i^c <= C * [c == y_i]
//
// with w_c = sum_i alpha_i^c x_i and e_i^c = 1 - [c == y_i]. Each point's
// block subproblem is solved exactly by the sorted-threshold method; the
// objective therefore never increases. Points are visited in a seeded
// random permutation per epoch; no shrinking, so the schedule is fully
// deterministic given the seed.
inline CrammerSingerResult solve_crammer_singer(
    const std::vector<std::vector<double>>& x, const std::vector<int>& y,
    int n_class, double cost, double tol = 1e-4, int max_epochs = 1000,
    unsigned seed = 1) {
    const std::size_t n = x.size();
    if (n == 0 || y.size() != n) throw DataError("empty or mismatched training data");
    const std::size_t dim = x.front().size();
    for (const auto& xi : x)
        if (xi.size() != dim) throw ConfigError("inconsistent feature dimensions");
    for (int yi : y)
        if (yi < 0 || yi >= n_class) throw DataError("label out of range");

    const std::size_t kc = static_cast<std::size_t>(n_class);
    std::vector<std::vector<double>> w(kc, std::vector<double>(dim, 0.0));
    std::vector<std::vector<double>> alpha(n, std::vector<double>(kc, 0.0));
    std::vector<double> qd(n, 0.0);  // x_i . x_i
    for (std::size_t i = 0; i < n; ++i)
        qd[i] = std::inner_product(x[i].begin(), x[i].end(), x[i].begin(), 0.0);

    const auto objective = [&]() {
        double obj = 0.0;
        for (const auto& wc : w)
            obj += 0.5 * std::inner_product(wc.begin(), wc.end(), wc.begin(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < kc; ++c)
                if (c != static_cast<std::size_t>(y[i])) obj += alpha[i][c];
        return obj;
    };

    std::mt19937 rng(seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    CrammerSingerResult result;
    std::vector<double> g(kc), b(kc), d(kc), alpha_new(kc);
    double prev_obj = objective();
    result.objective_trace.push_back(prev_obj);

    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t pi = 0; pi < n; ++pi) {
            const std::size_t i = perm[pi];
            const double a_i = qd[i];
            if (a_i <= 0.0) continue;
            const int yi = y[i];
            for (std::size_t c = 0; c < kc; ++c) {
                g[c] = (c == static_cast<std::size_t>(yi)) ? 0.0 : 1.0;
                g[c] += std::inner_product(x[i].begin(), x[i].end(), w[c].begin(), 0.0);
                b[c] = g[c] - a_i * alpha[i][c];
            }
            // Exact block minimizer: alpha_i^c = min(C_i^c, (beta - b_c)/A_i)
            // with beta the threshold making the block sum to zero, found by
            // scanning the sorted shifted gradients.
            d = b;
            d[static_cast<std::size_t>(yi)] += a_i * cost;
            std::sort(d.begin(), d.end(), std::greater<double>());
            double beta = d[0] - a_i * cost;
            int r = 1;
            while (r < n_class && beta < static_cast<double>(r) * d[static_cast<std::size_t>(r)]) {
                beta += d[static_cast<std::size_t>(r)];
                ++r;
            }
            beta /= static_cast<double>(r);
            bool moved = false;
            for (std::size_t c = 0; c < kc; ++c) {
                const double cap = (c == static_cast<std::size_t>(yi)) ? cost : 0.0;
                alpha_new[c] = std::min(cap, (beta - b[c]) / a_i);
                if (std::abs(alpha_new[c] - alpha[i][c]) > 1e-12) moved = true;
            }
            if (!moved) continue;
            for (std::size_t c = 0; c < kc; ++c) {
                const double delta = alpha_new[c] - alpha[i][c];
                if (delta == 0.0) continue;
                for (std::size_t f = 0; f < dim; ++f) w[c][f] += delta * x[i][f];
                alpha[i][c] = alpha_new[c];
            }
        }
        const double obj = objective();
        result.objective_trace.push_back(obj);
        const double denom = std::max(1.0, std::abs(prev_obj));
        if (std::abs(prev_obj - obj) / denom < tol) break;
        prev_obj = obj;
    }
    result.w = std::move(w);
    return result;
}

namespace detail {

// Bias handled by augmenting the features with a constant-1 coordinate.
inline std::vector<double> augment(const std::vector<double>& x) {
    std::vector<double> a = x;
    a.push_back(1.0);
    return a;
}

inline LinearFusionModel linear_model_from_solution(std::vector<std::vector<double>> w_aug,
                                                    int n_class, double cost) {
    LinearFusionModel model;
    model.k = n_class;
    model.c = cost;
    model.bias.resize(static_cast<std::size_t>(n_class));
    model.w.resize(static_cast<std::size_t>(n_class));
    for (int c = 0; c < n_class; ++c) {
        auto& row = w_aug[static_cast<std::size_t>(c)];
        model.bias[static_cast<std::size_t>(c)] = row.back();
        row.pop_back();
        model.w[static_cast<std::size_t>(c)] = std::move(row);
    }
    return model;
}

}  // namespace detail

// Trains linear fusion with the cost parameter selected on a logarithmic
// grid by cross-validated accuracy (ties prefer the smaller, i.e. more
// regularized, cost). Fold assignment is a seeded shuffle followed by
// round-robin, so the whole procedure is reproducible bit for bit.
inline LinearFusionModel train_linear_fusion(
    const std::vector<std::pair<CoupledResponse, int>>& validation, int k,
    int folds = 3, unsigned seed = 1) {
    if (validation.empty()) throw DataError("no validation data for fusion");
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    x.reserve(validation.size());
    for (const auto& [psi, bin] : validation) {
        if (bin < 0 || bin >= k) throw DataError("fusion label out of range");
        x.push_back(detail::augment(psi.concat()));
        y.push_back(bin);
    }
    if (*std::max_element(y.begin(), y.end()) == *std::min_element(y.begin(), y.end()))
        throw DataError("linear fusion needs at least two classes in the data");

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fold_of(x.size());
    for (std::size_t r = 0; r < order.size(); ++r)
        fold_of[order[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));

    const std::vector<double> grid = {1e-2, 1e-1, 1.0, 1e1, 1e2};
    double best_cost = grid.front();
    double best_acc = -1.0;
    for (double cost : grid) {
        long correct = 0, total = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::vector<double>> xt;
            std::vector<int> yt;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (fold_of[i] != f) {
                    xt.push_back(x[i]);
                    yt.push_back(y[i]);
                }
            if (xt.empty()) continue;
            const auto sol = solve_crammer_singer(xt, yt, k, cost, 1e-4, 1000, seed);
            const auto model = detail::linear_model_from_solution(sol.w, k, cost);
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (fold_of[i] != f) continue;
                std::vector<double> feat = x[i];
                feat.pop_back();
                if (predict_linear_features(model, feat) == y[i]) ++correct;
                ++total;
            }
        }
        const double acc = total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                                     : 0.0;
        if (acc > best_acc) {  // strict: ties keep the earlier (smaller) cost
            best_acc = acc;
            best_cost = cost;
        }
    }
    const auto sol = solve_crammer_singer(x, y, k, best_cost, 1e-4, 1000, seed);
    return detail::linear_model_from_solution(sol.w, k, best_cost);
}

}  // namespace relview
