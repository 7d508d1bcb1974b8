#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "proxyshift/calibrate.hpp"
#include "proxyshift/core.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/numeric.hpp"
#include "proxyshift/rng.hpp"

namespace proxyshift {

// EM output for the missing-case prevalence pi = q(y=1).
struct ProxyFit {
    double pi_hat = 0.0;
    std::vector<double> trajectory;  // iterates, starting at the initial value
    std::size_t iterations = 0;
    bool converged = false;
    double source_prevalence = 0.0;  // p(y=1 | m=0) plugged into the ratios
};

struct IpwOptions {
    // Raw weights above this empirical quantile are truncated to it.
    std::optional<double> clip_quantile;
    bool normalize = true;
    // Required only on the non-normalized path, where the marginal odds
    // (1-p_m)/p_m do not cancel.
    std::optional<double> missing_rate;
};

struct MomEstimate {
    double value = 0.0;
    bool clipped = false;  // raw ratio fell outside [0,1]
};

namespace detail {

// Sorted copies make every reduction independent of input unit order.
inline std::vector<double> sorted_copy(const std::vector<double>& xs) {
    std::vector<double> out(xs);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Self-normalized weighted mean; invariant to rescaling the weights.
inline double normalized_weighted_mean(const std::vector<double>& weights,
                                       const std::vector<double>& values) {
    if (weights.size() != values.size())
        throw ArgumentError("weights and values differ in length");
    KahanSum num, den;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        num.add(weights[i] * values[i]);
        den.add(weights[i]);
    }
    if (!(den.value() > 0.0))
        throw DegenerateWeightsError("all importance weights vanished");
    return num.value() / den.value();
}

namespace detail {

// Shared IPW reduction over (propensity, outcome) pairs; the bootstrap
// procedure resamples pairs and re-enters here so replicates apply the
// exact estimator, clipping included.
inline double ipw_core(std::vector<std::pair<double, double>> ey,
                       const IpwOptions& options) {
    if (ey.empty()) throw InsufficientDataError("ipw needs at least one observed unit");
    if (options.clip_quantile &&
        !(*options.clip_quantile > 0.0 && *options.clip_quantile <= 1.0))
        throw ArgumentError("clip quantile must lie in (0,1]");
    std::sort(ey.begin(), ey.end());

    std::vector<double> w(ey.size()), y(ey.size());
    for (std::size_t i = 0; i < ey.size(); ++i) {
        const double e = clamp_prob(ey[i].first);
        w[i] = e / (1.0 - e);
        y[i] = ey[i].second;
    }
    if (options.clip_quantile) {
        // w is ascending because e -> e/(1-e) is monotone.
        const double cap = quantile_sorted(w, *options.clip_quantile);
        for (double& wi : w) wi = std::min(wi, cap);
    }

    if (options.normalize) return normalized_weighted_mean(w, y);

    if (!options.missing_rate)
        throw ArgumentError("non-normalized ipw needs the marginal missing rate");
    const double pm = *options.missing_rate;
    if (!is_interior(pm)) throw ArgumentError("missing rate must be interior");
    KahanSum num;
    for (std::size_t i = 0; i < w.size(); ++i) num.add(w[i] * y[i]);
    return num.value() / static_cast<double>(w.size()) * (1.0 - pm) / pm;
}

}  // namespace detail

// Complete-case estimate: mean of the observed outcomes.
inline double estimate_cc(const Dataset& validation_observed) {
    return observed_prevalence(validation_observed);
}

// Direct regression estimate under ignorability: mean predicted score over
// the missing cases.
inline double estimate_direct(const ScoreSet& calibrated_missing_scores) {
    if (calibrated_missing_scores.empty())
        throw InsufficientDataError("direct estimate needs at least one score");
    const auto s = detail::sorted_copy(calibrated_missing_scores.scores);
    return mean(s);
}

// Inverse probability weighting of the observed cases onto the missing
// population: raw weight w = e/(1-e) with e = P(M=1|X).  Normalization
// cancels the marginal factor; the explicit (1-p_m)/p_m correction is only
// needed un-normalized.
inline double estimate_ipw(const Dataset& validation_observed,
                           const ScoreSet& propensity_scores_on_observed,
                           const IpwOptions& options = {}) {
    const auto& units = validation_observed.units();
    if (units.size() != propensity_scores_on_observed.size())
        throw ArgumentError("propensity scores misaligned with units");

    std::vector<std::pair<double, double>> ey;  // (propensity, outcome)
    ey.reserve(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!units[i].observed())
            throw ArgumentError("ipw input must contain only observed units");
        ey.emplace_back(propensity_scores_on_observed.scores[i],
                        static_cast<double>(*units[i].y));
    }
    return detail::ipw_core(std::move(ey), options);
}

// Unlabeled-data log likelihood of the shifted prevalence pi, additive
// constant dropped:  sum_n ln( pi s_n/p0 + (1-pi)(1-s_n)/(1-p0) ).
inline double log_likelihood(double pi, const ScoreSet& scores,
                             double source_prevalence) {
    if (!(pi >= 0.0 && pi <= 1.0)) throw ArgumentError("pi must lie in [0,1]");
    if (!is_interior(source_prevalence))
        throw ArgumentError("source prevalence must be interior");
    const auto s = detail::sorted_copy(scores.scores);
    const double p0 = source_prevalence;
    KahanSum ll;
    for (double si : s)
        ll.add(std::log(pi * si / p0 + (1.0 - pi) * (1.0 - si) / (1.0 - p0)));
    return ll.value();
}

// EM for the label-shift prevalence: the update averages the posterior
// responsibilities of class 1 under the current prior.  Ascends the
// log likelihood at every step.
inline ProxyFit em_label_shift(const ScoreSet& scores, double source_prevalence,
                               double init, double tol = 1e-8,
                               std::size_t max_iter = 500) {
    if (!is_interior(init)) throw ArgumentError("EM initial value must be interior");
    if (!is_interior(source_prevalence))
        throw ArgumentError("source prevalence must be interior");
    if (scores.empty()) throw InsufficientDataError("EM needs at least one score");
    if (!(tol > 0.0)) throw ArgumentError("EM tolerance must be positive");

    const auto s = detail::sorted_copy(scores.scores);
    const std::size_t n = s.size();
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = s[i] / source_prevalence;
        b[i] = (1.0 - s[i]) / (1.0 - source_prevalence);
    }

    ProxyFit fit;
    fit.source_prevalence = source_prevalence;
    double pi = init;
    fit.trajectory.push_back(pi);
    for (std::size_t it = 0; it < max_iter; ++it) {
        KahanSum resp;
        for (std::size_t i = 0; i < n; ++i) {
            const double num = pi * a[i];
            resp.add(num / (num + (1.0 - pi) * b[i]));
        }
        const double next = resp.value() / static_cast<double>(n);
        fit.trajectory.push_back(next);
        ++fit.iterations;
        const double delta = std::abs(next - pi);
        pi = next;
        if (delta < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.pi_hat = pi;
    return fit;
}

// Convenience overload with the default initialization at the source
// prevalence.
inline ProxyFit em_label_shift(const ScoreSet& scores, double source_prevalence) {
    return em_label_shift(scores, source_prevalence, source_prevalence);
}

// Brute-force maximizer of log_likelihood over {0, res, 2 res, ..., 1},
// ties to the smallest grid point.  The objective is concave (a sum of
// logs of affine functions), so its consecutive grid differences are
// non-increasing; a binary search over that monotone predicate plus an
// exhaustive scan of the surrounding window locates the grid argmax without
// touching all ~1/res points.
inline double grid_mle(const ScoreSet& scores, double source_prevalence,
                       double resolution) {
    if (!(resolution > 0.0 && resolution <= 0.01))
        throw ArgumentError("grid resolution must lie in (0, 0.01]");
    if (!is_interior(source_prevalence))
        throw ArgumentError("source prevalence must be interior");
    if (scores.empty()) throw InsufficientDataError("grid search needs scores");

    const auto s = detail::sorted_copy(scores.scores);
    const std::size_t n = s.size();
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double num = s[i] / source_prevalence;
        const double den = (1.0 - s[i]) / (1.0 - source_prevalence);
        a[i] = num - den;
        b[i] = den;
    }

    // Grid index -> parameter value; the last index maps to exactly 1.
    std::size_t last = static_cast<std::size_t>(std::ceil(1.0 / resolution - 1e-9));
    auto value_at = [&](std::size_t i) {
        return i >= last ? 1.0 : static_cast<double>(i) * resolution;
    };
    auto loglik = [&](std::size_t i) {
        const double pi = value_at(i);
        KahanSum ll;
        for (std::size_t j = 0; j < n; ++j) ll.add(std::log(pi * a[j] + b[j]));
        return ll.value();
    };

    constexpr std::size_t kWindow = 2048;
    std::size_t lo = 0, hi = last;
    if (last > 2 * kWindow) {
        // Largest i with L(i+1) > L(i); the argmax is its right neighbor.
        std::size_t blo = 0, bhi = last - 1, found = last;  // `last` = none
        while (blo <= bhi) {
            const std::size_t mid = blo + (bhi - blo) / 2;
            if (loglik(mid + 1) > loglik(mid)) {
                found = mid;
                blo = mid + 1;
            } else {
                if (mid == 0) break;
                bhi = mid - 1;
            }
        }
        const std::size_t center = found == last ? 0 : found + 1;
        lo = center > kWindow ? center - kWindow : 0;
        hi = std::min(last, center + kWindow);
    }

    std::size_t best = lo;
    double best_ll = loglik(lo);
    for (std::size_t i = lo + 1; i <= hi; ++i) {
        const double ll = loglik(i);
        if (ll > best_ll) {
            best_ll = ll;
            best = i;
        }
    }
    // Ties resolve to the smallest pi: the scan only replaces on strict
    // improvement and the flat case collapses the search to index 0.
    if (lo > 0 && loglik(0) >= best_ll) return value_at(0);
    return value_at(best);
}

// Label-shift adaptation of source-domain scores to a target prevalence:
//   q(y=1|x) = s pi/p0 / (s pi/p0 + (1-s)(1-pi)/(1-p0)).
inline ScoreSet adapt_scores(const ScoreSet& scores, double source_prevalence,
                             double target_prevalence) {
    if (!is_interior(source_prevalence) || !is_interior(target_prevalence))
        throw ArgumentError("prevalences must be interior");
    std::vector<double> out;
    out.reserve(scores.size());
    for (double s : scores.scores) {
        const double num = s * target_prevalence / source_prevalence;
        const double den =
            num + (1.0 - s) * (1.0 - target_prevalence) / (1.0 - source_prevalence);
        out.push_back(num / den);
    }
    return ScoreSet::of(std::move(out), scores.population, scores.calibrated);
}

// Method-of-moments estimate for scalar binary X with class conditionals
// beta_c = P(X=1|Y=c):  mu_Y^(1) = (mu_X^(1) - beta0) / (beta1 - beta0).
inline MomEstimate estimate_mom(double beta0, double beta1, double mu_x_missing) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(beta0) || !in_unit(beta1) || !in_unit(mu_x_missing))
        throw ArgumentError("method-of-moments arguments must lie in [0,1]");
    if (std::abs(beta1 - beta0) < 1e-12)
        throw UnidentifiedError("method of moments requires beta0 != beta1");
    MomEstimate est;
    const double raw = (mu_x_missing - beta0) / (beta1 - beta0);
    est.clipped = raw < 0.0 || raw > 1.0;
    est.value = std::clamp(raw, 0.0, 1.0);
    return est;
}

struct BootstrapOutcome {
    Estimate estimate;
    std::size_t failed = 0;  // replicates skipped because the procedure threw
};

// Percentile bootstrap over with-replacement index resamples.  The point
// estimate applies the procedure to the full sample; each replicate draws
// its indices from an independent substream of (seed, replicate).
inline BootstrapOutcome bootstrap_estimate(
    Method method, std::size_t sample_size,
    const std::function<double(const std::vector<std::size_t>&)>& procedure,
    std::size_t replicates, std::uint64_t seed) {
    if (replicates < 1) throw ArgumentError("bootstrap needs at least one replicate");
    if (sample_size < 1) throw InsufficientDataError("bootstrap sample is empty");

    std::vector<std::size_t> identity(sample_size);
    std::iota(identity.begin(), identity.end(), std::size_t{0});

    BootstrapOutcome outcome;
    outcome.estimate.method = method;
    outcome.estimate.replicates = replicates;
    outcome.estimate.point = procedure(identity);

    std::vector<double> values;
    values.reserve(replicates);
    std::vector<std::size_t> idx(sample_size);
    for (std::size_t b = 0; b < replicates; ++b) {
        Rng rng(derive_seed(seed, b + 1));
        for (std::size_t i = 0; i < sample_size; ++i)
            idx[i] = static_cast<std::size_t>(rng.below(sample_size));
        try {
            values.push_back(procedure(idx));
        } catch (const Error&) {
            ++outcome.failed;
        }
    }
    if (outcome.failed * 10 > replicates)
        throw BootstrapDegenerateError("more than 10% of bootstrap replicates failed");

    std::sort(values.begin(), values.end());
    outcome.estimate.ci_low = quantile_sorted(values, 0.025);
    outcome.estimate.ci_high = quantile_sorted(values, 0.975);
    return outcome;
}

}  // namespace proxyshift
