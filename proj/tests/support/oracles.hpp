#pragma once

// Test-side reference implementations, kept deliberately naive and separate
// from the library code paths they check.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "proxyshift/core.hpp"
#include "proxyshift/datagen.hpp"

namespace test_oracles {

// Plain exhaustive scan of the label-shift log likelihood over
// {0, res, 2 res, ..., 1}, ties to the smallest grid point.
inline double exhaustive_grid_mle(const std::vector<double>& scores, double p0,
                                  double resolution) {
    double best_pi = 0.0;
    double best_ll = -std::numeric_limits<double>::infinity();
    bool done = false;
    for (std::size_t i = 0; !done; ++i) {
        double pi = static_cast<double>(i) * resolution;
        if (pi >= 1.0) {
            pi = 1.0;
            done = true;
        }
        double ll = 0.0;
        for (double s : scores)
            ll += std::log(pi * s / p0 + (1.0 - pi) * (1.0 - s) / (1.0 - p0));
        if (ll > best_ll) {
            best_ll = ll;
            best_pi = pi;
        }
    }
    return best_pi;
}

// Full joint over the 8 cells (x, y, m) of the scalar-covariate design,
// enumerated directly from the generative factorization.
struct ToyJoint {
    std::array<std::array<std::array<double, 2>, 2>, 2> p;  // [x][y][m]

    explicit ToyJoint(const proxyshift::SimConfig& config) {
        for (int x = 0; x < 2; ++x) {
            for (int y = 0; y < 2; ++y) {
                const double py = y == 1 ? config.mu_y : 1.0 - config.mu_y;
                const double px = x == 1 ? config.cond[0][y] : 1.0 - config.cond[0][y];
                const double pm =
                    proxyshift::missing_prob(static_cast<double>(x), y, config);
                p[x][y][1] = py * px * pm;
                p[x][y][0] = py * px * (1.0 - pm);
            }
        }
    }

    double p_m(int m) const {
        double t = 0.0;
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) t += p[x][y][m];
        return t;
    }

    // mu_Y^(m) = P(Y=1 | M=m)
    double mu(int m) const {
        double num = 0.0;
        for (int x = 0; x < 2; ++x) num += p[x][1][m];
        return num / p_m(m);
    }

    // P(Y=1 | X=x, M=m)
    double y_given_xm(int x, int m) const {
        return p[x][1][m] / (p[x][0][m] + p[x][1][m]);
    }

    // P(Y=1 | X=x)
    double y_given_x(int x) const {
        double num = 0.0, den = 0.0;
        for (int m = 0; m < 2; ++m) {
            num += p[x][1][m];
            den += p[x][0][m] + p[x][1][m];
        }
        return num / den;
    }

    // P(M=1 | X=x)
    double m_given_x(int x) const {
        double num = 0.0, den = 0.0;
        for (int y = 0; y < 2; ++y) {
            num += p[x][y][1];
            den += p[x][y][0] + p[x][y][1];
        }
        return num / den;
    }

    // P(X=1 | M=m)
    double x_given_m(int m) const {
        return (p[1][0][m] + p[1][1][m]) / p_m(m);
    }
};

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> ranks(const std::vector<double>& xs) {
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        r[order[i]] = static_cast<double>(i + 1);
    return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

// Dataset with every outcome label flipped (covariates untouched).
inline proxyshift::Dataset complement_labels(const proxyshift::Dataset& data) {
    std::vector<proxyshift::Unit> units;
    units.reserve(data.size());
    for (const auto& u : data.units()) {
        proxyshift::Unit v = u;
        if (v.y) v.y = static_cast<std::uint8_t>(1 - *v.y);
        units.push_back(std::move(v));
    }
    return proxyshift::Dataset(std::move(units), data.dim());
}

}  // namespace test_oracles
