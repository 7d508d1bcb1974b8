#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "proxyshift/core.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/numeric.hpp"
#include "proxyshift/rng.hpp"

namespace proxyshift {

// Pattern-mixture-with-selection synthetic design:
//   Y ~ Bern(mu_y),  X_d | Y=y ~ Bern(cond[d][y]),
//   M | X=x, Y=y ~ Bern(sigmoid(beta0 + beta ((1-phi) xbar + phi y))).
// phi = 0 is an ignorable mechanism, phi = 1 a pure stable-proxy one.
struct SimConfig {
    double mu_y = 0.0;
    std::vector<std::array<double, 2>> cond;  // [d][y] = P(X_d = 1 | Y = y)
    double phi = 0.0;
    double beta0 = 0.0;
    double beta = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;

    std::size_t dim() const { return cond.size(); }

    void validate() const {
        if (cond.empty()) throw ArgumentError("sim config needs at least one covariate");
        if (!is_interior(mu_y)) throw ArgumentError("mu_y must be interior");
        if (!(phi >= 0.0 && phi <= 1.0)) throw ArgumentError("phi must lie in [0,1]");
        for (const auto& row : cond)
            if (!is_interior(row[0]) || !is_interior(row[1]))
                throw ArgumentError("class conditionals must be interior");
    }
};

struct MomentTargets {
    double mu0_target = 0.0;  // P(Y=1 | M=0)
    double mu1_target = 0.0;  // P(Y=1 | M=1)
};

struct ImpliedMoments {
    double p_m = 0.0;  // P(M=1)
    double mu0 = 0.0;
    double mu1 = 0.0;
};

// Generated data plus the sealed ground truth: the estimator-facing dataset
// hides y where m = 1, the oracle channel keeps every outcome for scoring.
struct SimDraw {
    Dataset dataset;
    std::vector<std::uint8_t> oracle_y;

    double oracle_missing_mean() const {
        std::size_t n = 0, ones = 0;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (dataset[i].observed()) continue;
            ++n;
            ones += oracle_y[i];
        }
        if (n == 0)
            throw InsufficientDataError("oracle missing mean needs a missing unit");
        return static_cast<double>(ones) / static_cast<double>(n);
    }
};

inline double missing_prob(double x_mean, int y, const SimConfig& config) {
    return sigmoid(config.beta0 +
                   config.beta * ((1.0 - config.phi) * x_mean +
                                  config.phi * static_cast<double>(y)));
}

inline SimDraw generate(const SimConfig& config) {
    config.validate();
    const std::size_t d = config.dim();
    Rng rng(config.seed);
    std::vector<Unit> units;
    units.reserve(config.n);
    std::vector<std::uint8_t> oracle;
    oracle.reserve(config.n);
    for (std::size_t i = 0; i < config.n; ++i) {
        const int y = rng.bernoulli(config.mu_y) ? 1 : 0;
        Unit u;
        u.x.resize(d);
        std::size_t ones = 0;
        for (std::size_t j = 0; j < d; ++j) {
            u.x[j] = rng.bernoulli(config.cond[j][y]) ? 1 : 0;
            ones += u.x[j];
        }
        const double xbar = static_cast<double>(ones) / static_cast<double>(d);
        u.m = rng.bernoulli(missing_prob(xbar, y, config)) ? 1 : 0;
        if (u.m == 0) u.y = static_cast<std::uint8_t>(y);
        units.push_back(std::move(u));
        oracle.push_back(static_cast<std::uint8_t>(y));
    }
    return SimDraw{Dataset(std::move(units), d), std::move(oracle)};
}

namespace detail {

// Discrete distribution of the covariate mean within one outcome class.
struct XbarAtoms {
    std::vector<double> xbar;
    std::vector<double> weight;
};

// Both built-in designs have i.i.d. covariate rows within each class, so the
// covariate mean is Binomial(D, m_y)/D; D = 1 is the two-point special case.
inline XbarAtoms xbar_atoms(const SimConfig& config, int y) {
    const std::size_t d = config.dim();
    const double first = config.cond[0][y];
    for (const auto& row : config.cond)
        if (row[y] != first)
            throw EnumerationError(
                "exact enumeration needs identical per-dimension conditionals "
                "within each class; use the Monte-Carlo fallback");
    XbarAtoms atoms;
    if (d == 1) {
        atoms.xbar = {0.0, 1.0};
        atoms.weight = {1.0 - first, first};
        return atoms;
    }
    atoms.weight = binomial_pmf(d, first);
    atoms.xbar.resize(d + 1);
    for (std::size_t k = 0; k <= d; ++k)
        atoms.xbar[k] = static_cast<double>(k) / static_cast<double>(d);
    return atoms;
}

inline double class_missing_rate(const XbarAtoms& atoms, double beta0, double beta,
                                 double phi, int y) {
    KahanSum s;
    for (std::size_t k = 0; k < atoms.xbar.size(); ++k)
        s.add(atoms.weight[k] *
              sigmoid(beta0 + beta * ((1.0 - phi) * atoms.xbar[k] +
                                      phi * static_cast<double>(y))));
    return s.value();
}

inline ImpliedMoments moments_from_rates(double mu_y, double r0, double r1) {
    ImpliedMoments m;
    m.p_m = r1 * mu_y + r0 * (1.0 - mu_y);
    if (m.p_m <= 1e-12 || m.p_m >= 1.0 - 1e-12)
        throw DegenerateMechanismError("missingness probability collapsed to 0 or 1");
    m.mu1 = r1 * mu_y / m.p_m;
    m.mu0 = (1.0 - r1) * mu_y / (1.0 - m.p_m);
    return m;
}

inline constexpr double kLinkBox = 20.0;

// Nested bisection for (beta0, beta) hitting the target conditional means.
// The inner solve pins beta0 so mu0 matches; the outer solve moves beta until
// mu1 matches.  Brackets are located by a coarse scan, so only a sign change
// inside [-20, 20]^2 is assumed, not global monotonicity.
inline std::pair<double, double> solve_links(double mu_y, const XbarAtoms& atoms0,
                                             const XbarAtoms& atoms1, double phi,
                                             const MomentTargets& targets) {
    const double t0 = targets.mu0_target, t1 = targets.mu1_target;
    if (!is_interior(t0) || !is_interior(t1))
        throw ArgumentError("moment targets must be interior");
    if (std::abs(t0 - mu_y) < 1e-12 && std::abs(t1 - mu_y) < 1e-12)
        return {0.0, 0.0};  // no-shift family; beta0 = 0 tie-break
    if (!((t0 < mu_y && mu_y < t1) || (t1 < mu_y && mu_y < t0)))
        throw ArgumentError("targets must straddle mu_y (mu0 < mu_y < mu1 or reversed)");

    auto moments = [&](double beta0, double beta) {
        return moments_from_rates(mu_y,
                                  class_missing_rate(atoms0, beta0, beta, phi, 0),
                                  class_missing_rate(atoms1, beta0, beta, phi, 1));
    };

    constexpr int kScan = 80;
    constexpr double kTol = 1e-11;

    // mu0 residual as a function of beta0 at fixed beta; may fail to bracket.
    auto solve_beta0 = [&](double beta) -> std::optional<double> {
        auto f = [&](double b0) {
            try {
                return moments(b0, beta).mu0 - t0;
            } catch (const DegenerateMechanismError&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        double prev_x = -kLinkBox, prev_f = f(prev_x);
        for (int i = 1; i <= kScan; ++i) {
            const double x = -kLinkBox + 2.0 * kLinkBox * i / kScan;
            const double fx = f(x);
            if (std::isnan(fx)) { prev_x = x; prev_f = fx; continue; }
            if (!std::isnan(prev_f) &&
                (prev_f == 0.0 || (prev_f < 0.0) != (fx < 0.0))) {
                double lo = prev_x, hi = x, flo = prev_f;
                for (int it = 0; it < 200 && hi - lo > kTol; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double fm = f(mid);
                    if (fm == 0.0) return mid;
                    if ((fm < 0.0) == (flo < 0.0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
            prev_x = x;
            prev_f = fx;
        }
        return std::nullopt;
    };

    auto mu1_residual = [&](double beta) -> std::optional<double> {
        const auto b0 = solve_beta0(beta);
        if (!b0) return std::nullopt;
        return moments(*b0, beta).mu1 - t1;
    };

    double root_beta = std::numeric_limits<double>::quiet_NaN();
    double prev_x = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> prev_h;
    for (int i = 0; i <= kScan; ++i) {
        const double x = -kLinkBox + 2.0 * kLinkBox * i / kScan;
        const auto hx = mu1_residual(x);
        if (hx && std::abs(*hx) < 1e-9) { root_beta = x; break; }
        if (hx && prev_h && ((*prev_h < 0.0) != (*hx < 0.0))) {
            double lo = prev_x, hi = x, hlo = *prev_h;
            for (int it = 0; it < 200 && hi - lo > kTol; ++it) {
                const double mid = 0.5 * (lo + hi);
                const auto hm = mu1_residual(mid);
                if (!hm) {  // feasibility hole; shrink toward the bracketed side
                    hi = mid;
                    continue;
                }
                if (std::abs(*hm) == 0.0) { lo = hi = mid; break; }
                if ((*hm < 0.0) == (hlo < 0.0)) {
                    lo = mid;
                    hlo = *hm;
                } else {
                    hi = mid;
                }
            }
            root_beta = 0.5 * (lo + hi);
            break;
        }
        if (hx) {
            prev_x = x;
            prev_h = hx;
        }
    }
    if (std::isnan(root_beta))
        throw InfeasibleTargetsError("no link parameters in the search box hit the targets");

    const auto b0 = solve_beta0(root_beta);
    if (!b0)
        throw InfeasibleTargetsError("no link parameters in the search box hit the targets");
    const auto check = moments(*b0, root_beta);
    if (std::abs(check.mu0 - t0) > 1e-6 || std::abs(check.mu1 - t1) > 1e-6)
        throw InfeasibleTargetsError("link solver could not match the moment targets");
    return {*b0, root_beta};
}

}  // namespace detail

// Exact P(M=1 | Y=y) by enumerating the covariate-mean distribution.
inline double conditional_missing_rate(const SimConfig& config, int y) {
    config.validate();
    if (y != 0 && y != 1) throw ArgumentError("y must be 0 or 1");
    const auto atoms = detail::xbar_atoms(config, y);
    return detail::class_missing_rate(atoms, config.beta0, config.beta, config.phi, y);
}

// Monte-Carlo fallback for designs without the i.i.d.-rows structure.
// Returns the estimate and its standard error.
inline std::pair<double, double> conditional_missing_rate_mc(
    const SimConfig& config, int y, std::size_t draws = 1000000) {
    config.validate();
    if (y != 0 && y != 1) throw ArgumentError("y must be 0 or 1");
    if (draws == 0) throw ArgumentError("needs at least one draw");
    Rng rng(derive_seed(config.seed, 0xACC0 + static_cast<std::uint64_t>(y)));
    const std::size_t d = config.dim();
    KahanSum sum, sumsq;
    for (std::size_t i = 0; i < draws; ++i) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < d; ++j)
            ones += rng.bernoulli(config.cond[j][y]) ? 1 : 0;
        const double p = missing_prob(
            static_cast<double>(ones) / static_cast<double>(d), y, config);
        sum.add(p);
        sumsq.add(p * p);
    }
    const double n = static_cast<double>(draws);
    const double m = sum.value() / n;
    const double var = std::max(0.0, sumsq.value() / n - m * m);
    return {m, std::sqrt(var / n)};
}

// Moments implied by a config through Bayes rule and the mixture identity:
//   p_m = sum_y P(M=1|Y=y) P(Y=y),  mu1 = P(M=1|Y=1) mu_y / p_m,
//   mu0 = (1 - P(M=1|Y=1)) mu_y / (1 - p_m).
inline ImpliedMoments implied_moments(const SimConfig& config) {
    return detail::moments_from_rates(config.mu_y,
                                      conditional_missing_rate(config, 0),
                                      conditional_missing_rate(config, 1));
}

// Solves (beta0, beta) so the implied (mu0, mu1) match the targets to 1e-6;
// p_m then follows from the mixture identity.
inline std::pair<double, double> solve_link_params(const MomentTargets& targets,
                                                   const SimConfig& config_without_links) {
    config_without_links.validate();
    return detail::solve_links(config_without_links.mu_y,
                               detail::xbar_atoms(config_without_links, 0),
                               detail::xbar_atoms(config_without_links, 1),
                               config_without_links.phi, targets);
}

inline constexpr MomentTargets kDesignTargets{0.25, 0.5};

// Scalar binary X with P(X=1|Y=0) = .3 and P(X=1|Y=1) = .7; links solved so
// (p_m, mu0, mu1) = (0.4, 0.25, 0.5).
inline SimConfig toy_config(double phi, std::size_t n = 0, std::uint64_t seed = 0) {
    SimConfig config;
    config.mu_y = 0.35;
    config.cond = {{0.3, 0.7}};
    config.phi = phi;
    config.n = n;
    config.seed = seed;
    auto [b0, b] = solve_link_params(kDesignTargets, config);
    config.beta0 = b0;
    config.beta = b;
    return config;
}

// 100-dimensional X with every row at (.42, .5); same solved moments.
inline SimConfig highdim_config(double phi, std::size_t n = 0, std::uint64_t seed = 0) {
    SimConfig config;
    config.mu_y = 0.35;
    config.cond.assign(100, {0.42, 0.5});
    config.phi = phi;
    config.n = n;
    config.seed = seed;
    auto [b0, b] = solve_link_params(kDesignTargets, config);
    config.beta0 = b0;
    config.beta = b;
    return config;
}

struct InducedDraw {
    SimDraw draw;
    double beta0 = 0.0;
    double beta = 0.0;
    ImpliedMoments implied;  // with respect to the base empirical distribution
};

// Applies the synthetic missingness mechanism to real (x, y) data: links are
// re-solved against the base dataset's empirical covariate-mean distribution
// and outcome mean so the induced moments hit the requested targets.
inline InducedDraw induce_missingness(const Dataset& base, const MomentTargets& targets,
                                      double phi, std::uint64_t seed) {
    if (!(phi >= 0.0 && phi <= 1.0)) throw ArgumentError("phi must lie in [0,1]");
    if (base.missing_count() != 0)
        throw ArgumentError("missingness induction needs a fully observed base dataset");
    if (base.empty()) throw InsufficientDataError("missingness induction needs units");

    const double d = static_cast<double>(base.dim());
    detail::XbarAtoms atoms[2];
    std::array<std::size_t, 2> class_count{0, 0};
    std::vector<double> xbar(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::size_t ones = 0;
        for (auto v : base[i].x) ones += v;
        xbar[i] = static_cast<double>(ones) / d;
        const int y = *base[i].y;
        atoms[y].xbar.push_back(xbar[i]);
        ++class_count[y];
    }
    if (class_count[0] == 0 || class_count[1] == 0)
        throw InsufficientDataError("missingness induction needs both outcome classes");
    for (int y = 0; y < 2; ++y)
        atoms[y].weight.assign(class_count[y], 1.0 / static_cast<double>(class_count[y]));
    const double mu_y =
        static_cast<double>(class_count[1]) / static_cast<double>(base.size());

    InducedDraw out;
    auto [b0, b] = detail::solve_links(mu_y, atoms[0], atoms[1], phi, targets);
    out.beta0 = b0;
    out.beta = b;
    out.implied = detail::moments_from_rates(
        mu_y, detail::class_missing_rate(atoms[0], b0, b, phi, 0),
        detail::class_missing_rate(atoms[1], b0, b, phi, 1));

    SimConfig mech;  // only the link fields matter for missing_prob
    mech.beta0 = b0;
    mech.beta = b;
    mech.phi = phi;

    Rng rng(seed);
    std::vector<Unit> units;
    units.reserve(base.size());
    std::vector<std::uint8_t> oracle;
    oracle.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const int y = *base[i].y;
        Unit u;
        u.x = base[i].x;
        u.m = rng.bernoulli(missing_prob(xbar[i], y, mech)) ? 1 : 0;
        if (u.m == 0) u.y = static_cast<std::uint8_t>(y);
        units.push_back(std::move(u));
        oracle.push_back(static_cast<std::uint8_t>(y));
    }
    out.draw = SimDraw{Dataset(std::move(units), base.dim()), std::move(oracle)};
    return out;
}

}  // namespace proxyshift
