#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "proxyshift/core.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/numeric.hpp"
#include "proxyshift/rng.hpp"

namespace proxyshift {

enum class LabelSelector { outcome, missingness };

namespace detail {

// Regression problem with an implicit trailing intercept column.  Rows are
// stored in a canonical order (label, then lexicographic features) so that
// floating-point accumulation — and therefore every fit — is bit-identical
// under permutations of the input units.
struct Design {
    std::size_t n = 0;
    std::size_t d = 0;  // feature count, excluding intercept
    std::vector<double> x;           // row-major, n*d
    std::vector<std::uint8_t> y;
    bool binary = false;
    // For binary designs: per-row active feature indices with the intercept
    // (index d) appended; pair loops over these lists replace dense MACs.
    std::vector<std::uint32_t> support;
    std::vector<std::uint32_t> offsets;  // n+1

    void canonicalize_and_index() {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (y[a] != y[b]) return y[a] < y[b];
            return std::lexicographical_compare(
                x.begin() + a * d, x.begin() + (a + 1) * d,
                x.begin() + b * d, x.begin() + (b + 1) * d);
        });
        std::vector<double> xs(n * d);
        std::vector<std::uint8_t> ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy_n(x.begin() + order[i] * d, d, xs.begin() + i * d);
            ys[i] = y[order[i]];
        }
        x = std::move(xs);
        y = std::move(ys);

        binary = std::all_of(x.begin(), x.end(),
                             [](double v) { return v == 0.0 || v == 1.0; });
        if (binary) {
            offsets.assign(n + 1, 0);
            support.clear();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j)
                    if (x[i * d + j] == 1.0)
                        support.push_back(static_cast<std::uint32_t>(j));
                support.push_back(static_cast<std::uint32_t>(d));  // intercept
                offsets[i + 1] = static_cast<std::uint32_t>(support.size());
            }
        }
    }
};

inline Design make_design(const Dataset& data, LabelSelector sel) {
    Design ds;
    ds.n = data.size();
    ds.d = data.dim();
    ds.x.resize(ds.n * ds.d);
    ds.y.resize(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        const Unit& u = data[i];
        if (sel == LabelSelector::outcome) {
            if (!u.observed())
                throw ArgumentError("outcome model training data must contain only observed units");
            ds.y[i] = *u.y;
        } else {
            ds.y[i] = u.m;
        }
        for (std::size_t j = 0; j < ds.d; ++j)
            ds.x[i * ds.d + j] = static_cast<double>(u.x[j]);
    }
    ds.canonicalize_and_index();
    return ds;
}

inline double dot_row(const Design& ds, std::size_t i,
                      const std::vector<double>& theta) {
    if (ds.binary) {
        double z = 0.0;
        for (std::uint32_t k = ds.offsets[i]; k < ds.offsets[i + 1]; ++k)
            z += theta[ds.support[k]];
        return z;
    }
    double z = theta[ds.d];
    const double* row = ds.x.data() + i * ds.d;
    for (std::size_t j = 0; j < ds.d; ++j) z += row[j] * theta[j];
    return z;
}

// Mean logistic log loss plus (l2/2)*||w||^2, intercept unpenalized.
inline double logistic_objective(const Design& ds, const std::vector<double>& theta,
                                 double l2) {
    KahanSum loss;
    for (std::size_t i = 0; i < ds.n; ++i) {
        const double z = dot_row(ds, i, theta);
        loss.add(softplus(z) - (ds.y[i] ? z : 0.0));
    }
    double penalty = 0.0;
    for (std::size_t j = 0; j < ds.d; ++j) penalty += theta[j] * theta[j];
    return loss.value() / static_cast<double>(ds.n) + 0.5 * l2 * penalty;
}

inline std::vector<double> logistic_gradient(const Design& ds,
                                             const std::vector<double>& theta,
                                             double l2) {
    std::vector<double> g(ds.d + 1, 0.0);
    const double inv_n = 1.0 / static_cast<double>(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        const double r = (sigmoid(dot_row(ds, i, theta)) -
                          static_cast<double>(ds.y[i])) * inv_n;
        if (ds.binary) {
            for (std::uint32_t k = ds.offsets[i]; k < ds.offsets[i + 1]; ++k)
                g[ds.support[k]] += r;
        } else {
            const double* row = ds.x.data() + i * ds.d;
            for (std::size_t j = 0; j < ds.d; ++j) g[j] += r * row[j];
            g[ds.d] += r;
        }
    }
    for (std::size_t j = 0; j < ds.d; ++j) g[j] += l2 * theta[j];
    return g;
}

// Upper triangle of the (d+1)x(d+1) Hessian, row-major.
inline std::vector<double> logistic_hessian(const Design& ds,
                                            const std::vector<double>& theta,
                                            double l2) {
    const std::size_t p = ds.d + 1;
    std::vector<double> h(p * p, 0.0);
    const double inv_n = 1.0 / static_cast<double>(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        const double s = sigmoid(dot_row(ds, i, theta));
        const double c = s * (1.0 - s) * inv_n;
        if (ds.binary) {
            for (std::uint32_t k = ds.offsets[i]; k < ds.offsets[i + 1]; ++k) {
                double* hrow = h.data() + ds.support[k] * p;
                for (std::uint32_t l = k; l < ds.offsets[i + 1]; ++l)
                    hrow[ds.support[l]] += c;
            }
        } else {
            const double* row = ds.x.data() + i * ds.d;
            for (std::size_t a = 0; a < ds.d; ++a) {
                if (row[a] == 0.0) continue;
                const double ca = c * row[a];
                double* hrow = h.data() + a * p;
                for (std::size_t b = a; b < ds.d; ++b) hrow[b] += ca * row[b];
                hrow[ds.d] += ca;
            }
            h[ds.d * p + ds.d] += c;
        }
    }
    for (std::size_t j = 0; j < ds.d; ++j) h[j * p + j] += l2;
    return h;
}

// In-place upper-triangular Cholesky; returns false if not positive definite.
inline bool cholesky_upper(std::vector<double>& a, std::size_t p) {
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i; j < p; ++j) {
            double s = a[i * p + j];
            for (std::size_t k = 0; k < i; ++k) s -= a[k * p + i] * a[k * p + j];
            if (i == j) {
                if (s <= 0.0) return false;
                a[i * p + i] = std::sqrt(s);
            } else {
                a[i * p + j] = s / a[i * p + i];
            }
        }
    }
    return true;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& u, std::size_t p,
                                          const std::vector<double>& rhs) {
    std::vector<double> z(rhs);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < i; ++k) z[i] -= u[k * p + i] * z[k];
        z[i] /= u[i * p + i];
    }
    for (std::size_t ii = p; ii > 0; --ii) {
        const std::size_t i = ii - 1;
        for (std::size_t k = i + 1; k < p; ++k) z[i] -= u[i * p + k] * z[k];
        z[i] /= u[i * p + i];
    }
    return z;
}

struct NewtonOptions {
    double l2 = 0.0;
    double tol = 1e-8;          // gradient infinity-norm
    std::size_t max_iter = 500;
    double box = 0.0;           // 0 = unconstrained, else coefficients clamped to [-box, box]
    std::vector<double> init;   // empty = zeros
    bool throw_at_cap = true;
};

struct NewtonResult {
    std::vector<double> theta;
    double objective = 0.0;
    double grad_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Damped Newton with Armijo backtracking and a gradient-step fallback.
// Monotone by construction: a candidate is only accepted when it does not
// increase the objective, so starting from `init` the final objective never
// exceeds the initial one.
inline NewtonResult newton_logistic(const Design& ds, const NewtonOptions& opt) {
    const std::size_t p = ds.d + 1;
    NewtonResult res;
    res.theta = opt.init.empty() ? std::vector<double>(p, 0.0) : opt.init;
    if (res.theta.size() != p) throw ArgumentError("newton init has wrong length");

    auto project = [&](std::vector<double>& th) {
        if (opt.box > 0.0)
            for (double& v : th) v = std::clamp(v, -opt.box, opt.box);
    };
    project(res.theta);
    res.objective = logistic_objective(ds, res.theta, opt.l2);

    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        const auto g = logistic_gradient(ds, res.theta, opt.l2);
        res.grad_norm = inf_norm(g);
        if (res.grad_norm <= opt.tol) {
            res.converged = true;
            return res;
        }

        auto h = logistic_hessian(ds, res.theta, opt.l2);
        std::vector<double> step;
        double jitter = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            auto hj = h;
            if (jitter > 0.0)
                for (std::size_t j = 0; j < p; ++j) hj[j * p + j] += jitter;
            if (cholesky_upper(hj, p)) {
                step = cholesky_solve(hj, p, g);
                for (double& v : step) v = -v;
                break;
            }
            jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0;
        }
        if (step.empty()) step = g, std::for_each(step.begin(), step.end(),
                                                  [](double& v) { v = -v; });

        double dir_deriv = 0.0;
        for (std::size_t j = 0; j < p; ++j) dir_deriv += g[j] * step[j];
        if (dir_deriv >= 0.0) {  // not a descent direction; fall back
            for (std::size_t j = 0; j < p; ++j) step[j] = -g[j];
            dir_deriv = -res.grad_norm * res.grad_norm;
        }

        bool accepted = false;
        for (double t = 1.0; t >= 1e-14; t *= 0.5) {
            std::vector<double> cand(p);
            for (std::size_t j = 0; j < p; ++j) cand[j] = res.theta[j] + t * step[j];
            project(cand);
            const double f = logistic_objective(ds, cand, opt.l2);
            const bool armijo = f <= res.objective + 1e-4 * t * dir_deriv;
            const bool boxed_decrease = opt.box > 0.0 && f < res.objective;
            if (armijo || boxed_decrease) {
                res.theta = std::move(cand);
                res.objective = f;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            // No improving point along either direction: numerically stalled
            // (typically pinned at the box).  Report the last gradient norm.
            break;
        }
    }

    const auto g = logistic_gradient(ds, res.theta, opt.l2);
    res.grad_norm = inf_norm(g);
    res.converged = res.grad_norm <= opt.tol;
    if (!res.converged && opt.throw_at_cap)
        throw ConvergenceError("logistic fit did not converge", res.grad_norm);
    return res;
}

// Deterministic fold labels: shuffled round-robin, sizes differ by <= 1.
inline std::vector<std::size_t> make_folds(std::size_t n, std::size_t k,
                                           std::uint64_t seed) {
    Rng rng(seed);
    auto order = shuffled_indices(n, rng);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % k;
    return fold;
}

inline constexpr std::uint64_t kCvFoldSeed = 0x3c6ef372fe94f82aULL;

}  // namespace detail

// Bernoulli naive Bayes over binary covariates, Laplace-smoothed so every
// stored probability is strictly interior.
struct NaiveBayesModel {
    double log_prior = 0.0;        // log P(y=1)
    double log_prior0 = 0.0;       // log P(y=0)
    std::vector<std::array<double, 2>> log_cond;   // [d][c] = log P(x_d=1 | y=c)
    std::vector<std::array<double, 2>> log_cond0;  // [d][c] = log P(x_d=0 | y=c)
    double alpha = 1.0;

    std::size_t dim() const { return log_cond.size(); }
};

inline NaiveBayesModel fit_naive_bayes(const Dataset& train, double alpha = 1.0) {
    if (alpha <= 0.0) throw ArgumentError("naive Bayes smoothing must be positive");
    if (train.empty()) throw InsufficientDataError("naive Bayes needs training units");

    const std::size_t d = train.dim();
    std::array<std::size_t, 2> class_count{0, 0};
    std::vector<std::array<std::size_t, 2>> ones(d, {0, 0});
    for (const auto& u : train.units()) {
        if (!u.observed())
            throw ArgumentError("naive Bayes training data must contain only observed units");
        const std::size_t c = *u.y;
        ++class_count[c];
        for (std::size_t j = 0; j < d; ++j) ones[j][c] += u.x[j];
    }

    NaiveBayesModel model;
    model.alpha = alpha;
    const double n = static_cast<double>(train.size());
    model.log_prior = std::log((static_cast<double>(class_count[1]) + alpha) /
                               (n + 2.0 * alpha));
    model.log_prior0 = std::log((static_cast<double>(class_count[0]) + alpha) /
                                (n + 2.0 * alpha));
    model.log_cond.resize(d);
    model.log_cond0.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t c = 0; c < 2; ++c) {
            const double denom = static_cast<double>(class_count[c]) + 2.0 * alpha;
            const double k1 = static_cast<double>(ones[j][c]) + alpha;
            const double k0 = static_cast<double>(class_count[c] - ones[j][c]) + alpha;
            model.log_cond[j][c] = std::log(k1 / denom);
            model.log_cond0[j][c] = std::log(k0 / denom);
        }
    }
    return model;
}

// Posterior P(y=1 | x) via the log-odds form of Bayes rule.
inline double predict_naive_bayes(const NaiveBayesModel& model,
                                  const std::vector<std::uint8_t>& x) {
    if (x.size() != model.dim())
        throw ArgumentError("covariate dimension differs from the fitted model");
    double s1 = model.log_prior, s0 = model.log_prior0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j]) {
            s1 += model.log_cond[j][1];
            s0 += model.log_cond[j][0];
        } else {
            s1 += model.log_cond0[j][1];
            s0 += model.log_cond0[j][0];
        }
    }
    return clamp_prob(sigmoid(s1 - s0));
}

struct LogisticModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double l2 = 0.0;
};

inline LogisticModel fit_logistic(const Dataset& train, LabelSelector sel,
                                  double lambda,
                                  const std::vector<double>& warm_start = {}) {
    if (lambda < 0.0) throw ArgumentError("l2 strength must be non-negative");
    if (train.empty()) throw InsufficientDataError("logistic fit needs training units");
    auto design = detail::make_design(train, sel);
    detail::NewtonOptions opt;
    opt.l2 = lambda;
    opt.init = warm_start;
    auto res = detail::newton_logistic(design, opt);
    LogisticModel model;
    model.intercept = res.theta.back();
    res.theta.pop_back();
    model.weights = std::move(res.theta);
    model.l2 = lambda;
    return model;
}

inline double predict_logistic(const LogisticModel& model,
                               const std::vector<std::uint8_t>& x) {
    if (x.size() != model.weights.size())
        throw ArgumentError("covariate dimension differs from the fitted model");
    double z = model.intercept;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (x[j]) z += model.weights[j];
    return clamp_prob(sigmoid(z));
}

struct CvReport {
    std::vector<double> grid;
    std::vector<double> mean_loss;  // aligned with grid
    double chosen = 0.0;            // argmin, ties broken toward larger lambda
};

inline std::vector<double> default_lambda_grid() {
    return {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
}

// Held-out log loss over a deterministic k-fold partition.  Candidates are
// evaluated from most to least regularized with warm starts.
inline CvReport cross_validate(const Dataset& train, LabelSelector sel,
                               const std::vector<double>& grid, std::size_t k = 10) {
    if (grid.empty()) throw ArgumentError("cross validation needs a candidate grid");
    if (k < 2) throw ArgumentError("cross validation needs k >= 2");
    if (train.size() < k)
        throw ArgumentError("cross validation needs at least k units");

    const auto design = detail::make_design(train, sel);
    const auto fold = detail::make_folds(design.n, k, detail::kCvFoldSeed);

    std::vector<std::size_t> order(grid.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

    std::vector<KahanSum> loss_sum(grid.size());
    for (std::size_t f = 0; f < k; ++f) {
        detail::Design fit_part;
        fit_part.d = design.d;
        std::vector<std::size_t> held;
        for (std::size_t i = 0; i < design.n; ++i) {
            if (fold[i] == f) {
                held.push_back(i);
            } else {
                fit_part.x.insert(fit_part.x.end(), design.x.begin() + i * design.d,
                                  design.x.begin() + (i + 1) * design.d);
                fit_part.y.push_back(design.y[i]);
            }
        }
        fit_part.n = fit_part.y.size();
        fit_part.canonicalize_and_index();

        std::vector<double> warm;
        for (std::size_t g : order) {
            detail::NewtonOptions opt;
            opt.l2 = grid[g];
            opt.init = warm;
            auto res = detail::newton_logistic(fit_part, opt);
            warm = res.theta;
            for (std::size_t i : held) {
                double z = res.theta[design.d];
                for (std::size_t j = 0; j < design.d; ++j)
                    z += design.x[i * design.d + j] * res.theta[j];
                loss_sum[g].add(log_loss(clamp_prob(sigmoid(z)), design.y[i] != 0));
            }
        }
    }

    CvReport report;
    report.grid = grid;
    report.mean_loss.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
        report.mean_loss[g] = loss_sum[g].value() / static_cast<double>(design.n);

    std::size_t best = order.front();
    for (std::size_t g : order)
        if (report.mean_loss[g] < report.mean_loss[best]) best = g;
    report.chosen = grid[best];
    return report;
}

}  // namespace proxyshift
