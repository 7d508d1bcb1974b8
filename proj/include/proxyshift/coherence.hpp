#pragma once

#include <cmath>
#include <vector>

#include "proxyshift/calibrate.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/numeric.hpp"

namespace proxyshift {

// Propensities for the same units estimated two ways: directly from a
// supervised model of M|X, and indirectly through the stable-proxy identity.
struct PropensityPair {
    ScoreSet direct;
    ScoreSet stable;
    Population population = Population::pooled;
};

struct CoherenceResult {
    double delta = 0.0;            // mean per-unit symmetric KL
    std::vector<double> per_unit;
    bool calibrated_inputs = false;
    Population population = Population::pooled;
};

// Stable-proxy propensity: under label shift, P(M=1|x) is proportional to
//   ( (1-s)/(1-p0) * (1-pi1) + s/p0 * pi1 ) * p_m           for m = 1,
// while the m = 0 mass reduces to (1 - p_m) because the class ratio cancels.
inline double stable_propensity(double outcome_score, double source_prevalence,
                                double target_prevalence, double missing_rate) {
    if (!is_interior(outcome_score) || !is_interior(source_prevalence) ||
        !is_interior(target_prevalence) || !is_interior(missing_rate))
        throw ArgumentError("stable propensity inputs must be interior");
    const double s = outcome_score;
    const double mass1 = ((1.0 - s) / (1.0 - source_prevalence) * (1.0 - target_prevalence) +
                          s / source_prevalence * target_prevalence) *
                         missing_rate;
    const double mass0 = 1.0 - missing_rate;
    return mass1 / (mass1 + mass0);
}

// Symmetric KL between Bernoulli(p) and Bernoulli(q); algebraically equal to
// (p - q) (logit p - logit q), which is stable near the boundaries.
inline double sym_kl_bernoulli(double p, double q) {
    p = clamp_prob(p);
    q = clamp_prob(q);
    return (p - q) * (logit(p) - logit(q));
}

inline CoherenceResult coherence_score(const PropensityPair& pair) {
    if (pair.direct.size() != pair.stable.size())
        throw ArgumentError("direct and stable propensities misaligned");
    if (pair.direct.empty())
        throw ArgumentError("coherence score needs at least one unit");

    CoherenceResult result;
    result.population = pair.population;
    result.calibrated_inputs = pair.direct.calibrated;
    result.per_unit.reserve(pair.direct.size());
    KahanSum total;
    for (std::size_t i = 0; i < pair.direct.size(); ++i) {
        const double d = sym_kl_bernoulli(pair.direct.scores[i], pair.stable.scores[i]);
        result.per_unit.push_back(d);
        total.add(d);
    }
    result.delta = total.value() / static_cast<double>(result.per_unit.size());
    return result;
}

}  // namespace proxyshift
