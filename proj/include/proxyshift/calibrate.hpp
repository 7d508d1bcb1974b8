#pragma once

#include <cstdint>
#include <vector>

#include "proxyshift/errors.hpp"
#include "proxyshift/models.hpp"
#include "proxyshift/numeric.hpp"

namespace proxyshift {

enum class Population { validation_observed, validation_missing, pooled };

inline const char* population_name(Population p) {
    switch (p) {
        case Population::validation_observed: return "validation_observed";
        case Population::validation_missing: return "validation_missing";
        case Population::pooled: return "pooled";
    }
    return "?";
}

// Per-unit model probabilities, clamped to the interior so downstream ratios
// stay finite.
struct ScoreSet {
    std::vector<double> scores;
    bool calibrated = false;
    Population population = Population::pooled;

    static ScoreSet of(std::vector<double> raw, Population pop,
                       bool calibrated_flag = false) {
        for (double& s : raw) s = clamp_prob(s);
        return ScoreSet{std::move(raw), calibrated_flag, pop};
    }

    std::size_t size() const { return scores.size(); }
    bool empty() const { return scores.empty(); }
};

// Two-parameter logistic recalibration map
//   s -> sigmoid(inv_temperature * logit(s) + offset).
struct PlattParams {
    double inv_temperature = 1.0;
    double offset = 0.0;
    // Set when the calibration labels were all identical; the offset then
    // runs to the coefficient cap rather than a finite optimum.
    bool degenerate_labels = false;
};

inline constexpr double kPlattCoefficientCap = 40.0;

// Fits (1/T, b) by minimizing mean log loss of sigmoid((1/T) logit(s) + b)
// against the labels, starting from the identity transform (1, 0).  The
// optimizer only ever accepts improving steps, so the fitted transform never
// has higher in-sample loss than the identity.
inline PlattParams fit_platt(const ScoreSet& raw_scores,
                             const std::vector<std::uint8_t>& labels) {
    if (raw_scores.size() != labels.size())
        throw ArgumentError("calibration scores and labels differ in length");
    if (raw_scores.size() < 2)
        throw InsufficientDataError("calibration needs at least 2 units");

    detail::Design ds;
    ds.n = raw_scores.size();
    ds.d = 1;
    ds.x.resize(ds.n);
    ds.y = labels;
    for (std::size_t i = 0; i < ds.n; ++i)
        ds.x[i] = logit(clamp_prob(raw_scores.scores[i]));
    ds.canonicalize_and_index();

    detail::NewtonOptions opt;
    opt.init = {1.0, 0.0};
    opt.box = kPlattCoefficientCap;
    opt.max_iter = 200;
    opt.throw_at_cap = false;
    const auto res = detail::newton_logistic(ds, opt);

    PlattParams params;
    params.inv_temperature = res.theta[0];
    params.offset = res.theta[1];
    bool all_same = true;
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[0]) { all_same = false; break; }
    params.degenerate_labels = all_same;
    return params;
}

inline ScoreSet apply_platt(const PlattParams& params, const ScoreSet& raw_scores) {
    std::vector<double> out;
    out.reserve(raw_scores.size());
    for (double s : raw_scores.scores)
        out.push_back(sigmoid(params.inv_temperature * logit(clamp_prob(s)) +
                              params.offset));
    return ScoreSet::of(std::move(out), raw_scores.population, true);
}

// Mean log loss of a score set against labels; used to audit that
// calibration never hurts in sample.
inline double score_log_loss(const ScoreSet& scores,
                             const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw ArgumentError("scores and labels differ in length");
    if (scores.empty()) throw InsufficientDataError("log loss of an empty score set");
    KahanSum s;
    for (std::size_t i = 0; i < labels.size(); ++i)
        s.add(log_loss(clamp_prob(scores.scores[i]), labels[i] != 0));
    return s.value() / static_cast<double>(labels.size());
}

}  // namespace proxyshift
