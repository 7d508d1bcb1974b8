#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "proxyshift/errors.hpp"

namespace proxyshift {

// All probabilities that feed ratios are kept inside [eps, 1-eps].
inline constexpr double kProbEps = 1e-6;

inline double clamp_prob(double p) {
    return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

inline bool is_interior(double p) { return p > 0.0 && p < 1.0; }

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// log(1 + e^z) without overflow.
inline double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Negative log likelihood of a Bernoulli outcome under probability p.
inline double log_loss(double p, bool y) {
    return y ? -std::log(p) : -std::log1p(-p);
}

// Compensated accumulator; keeps long sums reproducible to ~1 ulp.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double mean(std::span<const double> xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value() / static_cast<double>(xs.size());
}

// Linear-interpolation empirical quantile (the numpy/R type-7 convention).
// `sorted` must be ascending and non-empty; q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ArgumentError("quantile of empty sample");
    if (q < 0.0 || q > 1.0) throw ArgumentError("quantile level outside [0,1]");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, q);
}

// pmf of Binomial(n, p) as a dense vector over k = 0..n, via the stable
// multiplicative recurrence.
inline std::vector<double> binomial_pmf(std::size_t n, double p) {
    std::vector<double> pmf(n + 1);
    // Start from the largest-probability region to avoid underflow at the
    // tails poisoning the recurrence: compute in log space instead.
    std::vector<double> logpmf(n + 1);
    const double lp = std::log(p), lq = std::log1p(-p);
    double lchoose = 0.0;  // log C(n, 0)
    for (std::size_t k = 0; k <= n; ++k) {
        logpmf[k] = lchoose + static_cast<double>(k) * lp +
                    static_cast<double>(n - k) * lq;
        if (k < n)
            lchoose += std::log(static_cast<double>(n - k)) -
                       std::log(static_cast<double>(k + 1));
    }
    for (std::size_t k = 0; k <= n; ++k) pmf[k] = std::exp(logpmf[k]);
    return pmf;
}

}  // namespace proxyshift
