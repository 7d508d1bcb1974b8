#include "doctest.h"

#include <cmath>
#include <vector>

#include "proxyshift/datagen.hpp"
#include "proxyshift/estimators.hpp"
#include "support/oracles.hpp"

using namespace proxyshift;

namespace {

Unit obs(std::uint8_t x, std::uint8_t y) {
    Unit u;
    u.x = {x};
    u.m = 0;
    u.y = y;
    return u;
}

ScoreSet scores_of(std::vector<double> v,
                   Population pop = Population::validation_missing) {
    return ScoreSet::of(std::move(v), pop);
}

std::vector<double> random_scores(std::size_t n, Rng& rng, double lo = 0.02,
                                  double hi = 0.98) {
    std::vector<double> s(n);
    for (auto& v : s) v = lo + (hi - lo) * rng.u01();
    return s;
}

}  // namespace

TEST_CASE("estimate_cc arithmetic and errors") {
    const Dataset data({obs(0, 0), obs(0, 1), obs(1, 1), obs(1, 0)}, 1);
    CHECK(estimate_cc(data) == doctest::Approx(0.5).epsilon(1e-12));
    const Dataset one({obs(1, 1)}, 1);
    CHECK(estimate_cc(one) == 1.0);
    Unit mis;
    mis.x = {0};
    mis.m = 1;
    CHECK_THROWS_AS(estimate_cc(Dataset({mis}, 1)), InsufficientDataError);
}

TEST_CASE("estimate_direct arithmetic") {
    CHECK(estimate_direct(scores_of({0.2, 0.4})) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(estimate_direct(scores_of({0.37, 0.37, 0.37})) ==
          doctest::Approx(0.37).epsilon(1e-12));
    CHECK_THROWS_AS(estimate_direct(scores_of({})), InsufficientDataError);
}

TEST_CASE("direct estimator is exact on the phi=0 toy enumeration") {
    // Under ignorability P(Y|X, M=0) = P(Y|X, M=1), so averaging the exact
    // P(Y|X) over the missing-population X distribution recovers mu1.
    const auto config = toy_config(0.0);
    const test_oracles::ToyJoint joint(config);
    double estimate = 0.0;
    for (int x = 0; x < 2; ++x) {
        const double px = x == 1 ? joint.x_given_m(1) : 1.0 - joint.x_given_m(1);
        estimate += px * joint.y_given_xm(x, 0);
    }
    CHECK(estimate == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(joint.mu(1) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("estimate_ipw constant propensity reduces to the complete-case mean") {
    const Dataset data({obs(0, 0), obs(0, 1), obs(1, 1), obs(1, 0), obs(1, 1)}, 1);
    const auto e = ScoreSet::of({0.5, 0.5, 0.5, 0.5, 0.5}, Population::validation_observed);
    CHECK(estimate_ipw(data, e) == doctest::Approx(estimate_cc(data)).epsilon(1e-12));
}

TEST_CASE("estimate_ipw clip-then-normalize arithmetic") {
    // e = (0.5, 0.9) gives raw weights (1, 9); the 0.375 quantile of {1, 9}
    // under linear interpolation is 4, so the clipped estimate is
    // (0*1 + 1*4) / (1 + 4) = 0.8.
    const Dataset data({obs(0, 0), obs(1, 1)}, 1);
    const auto e = ScoreSet::of({0.5, 0.9}, Population::validation_observed);
    IpwOptions options;
    options.clip_quantile = 0.375;
    CHECK(estimate_ipw(data, e, options) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(estimate_ipw(data, e) == doctest::Approx(9.0 / 10.0).epsilon(1e-12));
}

TEST_CASE("ipw population identity on the phi=0 toy enumeration") {
    // With exact propensities the population-weighted observed mean equals
    // mu1: sum_x p(x|m=0) w(x) y(x) / sum_x p(x|m=0) w(x) with w = e/(1-e).
    const auto config = toy_config(0.0);
    const test_oracles::ToyJoint joint(config);
    double num = 0.0, den = 0.0;
    for (int x = 0; x < 2; ++x) {
        const double px0 = (joint.p[x][0][0] + joint.p[x][1][0]) / joint.p_m(0);
        const double e = joint.m_given_x(x);
        const double w = e / (1.0 - e);
        num += px0 * w * joint.y_given_xm(x, 0);
        den += px0 * w;
    }
    CHECK(num / den == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("normalized weighted mean is scale invariant") {
    Rng rng(10);
    std::vector<double> w(40), y(40);
    for (auto& v : w) v = 0.1 + 5.0 * rng.u01();
    for (auto& v : y) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
    const double base = normalized_weighted_mean(w, y);
    for (double c : {1e-3, 0.7, 13.0, 4096.0}) {
        auto scaled = w;
        for (auto& v : scaled) v *= c;
        CHECK(normalized_weighted_mean(scaled, y) ==
              doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("log_likelihood closed forms and concavity") {
    const auto flat = scores_of({0.5, 0.5, 0.5});
    CHECK(log_likelihood(0.0, flat, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(log_likelihood(0.3, flat, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(log_likelihood(1.0, flat, 0.5) == doctest::Approx(0.0).epsilon(1e-12));

    const auto single = scores_of({0.9});
    CHECK(log_likelihood(1.0, single, 0.5) ==
          doctest::Approx(std::log(1.8)).epsilon(1e-12));
    CHECK(log_likelihood(0.0, single, 0.5) ==
          doctest::Approx(std::log(0.2)).epsilon(1e-12));

    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = scores_of(random_scores(30, rng));
        const double p0 = 0.2 + 0.6 * rng.u01();
        const double h = 0.01;
        for (int k = 1; k <= 98; ++k) {
            const double pi = static_cast<double>(k) * h;
            const double second = log_likelihood(std::min(pi + h, 1.0), s, p0) -
                                  2.0 * log_likelihood(pi, s, p0) +
                                  log_likelihood(pi - h, s, p0);
            CHECK(second <= 1e-10);
        }
    }
}

TEST_CASE("EM fixed point on a flat likelihood") {
    const auto flat = scores_of({0.5, 0.5, 0.5, 0.5});
    const auto fit = em_label_shift(flat, 0.5, 0.3);
    CHECK(fit.pi_hat == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(fit.iterations == 1);
    CHECK(fit.converged);
    CHECK(fit.trajectory.size() == 2);
}

TEST_CASE("EM saturates on upper-clamped scores") {
    const auto top = scores_of({1.0, 1.0, 1.0});  // clamped to 1 - 1e-6
    const auto fit = em_label_shift(top, 0.5, 0.5);
    CHECK(fit.pi_hat >= 1.0 - 1e-4);
}

TEST_CASE("EM matches the exhaustive grid oracle on the worked example") {
    const std::vector<double> raw{0.9, 0.8, 0.1};
    const auto s = scores_of(raw);
    const auto fit = em_label_shift(s, 0.5, 0.5);
    const double oracle = test_oracles::exhaustive_grid_mle(raw, 0.5, 1e-6);
    CHECK(std::abs(fit.pi_hat - oracle) <= 1e-4);
    CHECK(fit.pi_hat == doctest::Approx(0.6776).epsilon(5e-4));
    CHECK(fit.converged);

    // grid_mle agrees with the reference scan at this resolution.
    CHECK(grid_mle(s, 0.5, 1e-6) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("EM trajectories ascend the log likelihood") {
    Rng rng(64);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + static_cast<std::size_t>(rng.below(100));
        const auto s = scores_of(random_scores(n, rng));
        const double p0 = 0.1 + 0.8 * rng.u01();
        const auto fit = em_label_shift(s, p0, 0.1 + 0.8 * rng.u01());
        for (std::size_t i = 1; i < fit.trajectory.size(); ++i) {
            const double prev = log_likelihood(fit.trajectory[i - 1], s, p0);
            const double next = log_likelihood(fit.trajectory[i], s, p0);
            CHECK(next >= prev - 1e-12);
        }
    }
}

TEST_CASE("EM argument checks") {
    const auto s = scores_of({0.4, 0.6});
    CHECK_THROWS_AS(em_label_shift(s, 0.5, 0.0), ArgumentError);
    CHECK_THROWS_AS(em_label_shift(s, 0.5, 1.0), ArgumentError);
    CHECK_THROWS_AS(em_label_shift(scores_of({}), 0.5, 0.5), InsufficientDataError);
}

TEST_CASE("grid_mle ties, boundaries, and argument checks") {
    const auto flat = scores_of({0.5, 0.5});
    CHECK(grid_mle(flat, 0.5, 1e-3) == 0.0);  // ties resolve to the smallest point

    const auto high = scores_of({0.99});
    CHECK(grid_mle(high, 0.5, 1e-3) == 1.0);  // monotone likelihood

    CHECK_THROWS_AS(grid_mle(high, 0.5, 0.0), ArgumentError);
    CHECK_THROWS_AS(grid_mle(high, 0.5, 0.5), ArgumentError);
}

TEST_CASE("grid_mle equals the plain exhaustive scan on random inputs") {
    Rng rng(123);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 5 + static_cast<std::size_t>(rng.below(60));
        const auto raw = random_scores(n, rng);
        const double p0 = 0.15 + 0.7 * rng.u01();
        const double res = trial % 2 == 0 ? 1e-3 : 1e-4;
        const double smart = grid_mle(scores_of(raw), p0, res);
        const double dumb = test_oracles::exhaustive_grid_mle(raw, p0, res);
        CHECK(smart == doctest::Approx(dumb).epsilon(1e-12));
    }
}

TEST_CASE("adapt_scores closed forms and fixed point") {
    const auto s = scores_of({0.5});
    CHECK(adapt_scores(s, 0.5, 0.8).scores[0] == doctest::Approx(0.8).epsilon(1e-12));

    const auto any = scores_of({0.3, 0.6, 0.9});
    const auto same = adapt_scores(any, 0.4, 0.4);
    for (std::size_t i = 0; i < any.size(); ++i)
        CHECK(same.scores[i] == doctest::Approx(any.scores[i]).epsilon(1e-12));

    const auto clamped = scores_of({1.0});  // sits at the upper clamp
    CHECK(adapt_scores(clamped, 0.5, 0.7).scores[0] ==
          doctest::Approx(1.0 - 1e-6).epsilon(1e-9));

    // Adapting to the EM solution is self-consistent: the adapted scores
    // average to that solution, and EM from it stays put.
    Rng rng(31);
    const auto raw = random_scores(200, rng);
    const auto scores = scores_of(raw);
    const double p0 = 0.35;
    const double pi_star = em_label_shift(scores, p0, p0, 1e-12, 2000).pi_hat;
    const auto adapted = adapt_scores(scores, p0, pi_star);
    CHECK(mean(adapted.scores) == doctest::Approx(pi_star).epsilon(1e-7));
    const auto refit = em_label_shift(adapted, pi_star, pi_star);
    CHECK(refit.pi_hat == doctest::Approx(pi_star).epsilon(1e-6));
}

TEST_CASE("estimate_mom closed forms") {
    CHECK(estimate_mom(0.3, 0.7, 0.5).value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(estimate_mom(0.3, 0.7, 0.7).value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(estimate_mom(0.3, 0.7, 0.3).value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(estimate_mom(0.3, 0.7, 0.5).clipped);

    const auto clipped = estimate_mom(0.3, 0.7, 0.9);  // raw ratio 1.5
    CHECK(clipped.clipped);
    CHECK(clipped.value == 1.0);

    CHECK_THROWS_AS(estimate_mom(0.4, 0.4, 0.5), UnidentifiedError);
    CHECK_THROWS_AS(estimate_mom(-0.1, 0.7, 0.5), ArgumentError);
}

TEST_CASE("bootstrap degenerate and singleton cases") {
    // Constant sample: every replicate reproduces the same estimate.
    const std::vector<double> constant(20, 0.42);
    const auto outcome = bootstrap_estimate(
        Method::direct, constant.size(),
        [&](const std::vector<std::size_t>& idx) {
            KahanSum s;
            for (auto i : idx) s.add(constant[i]);
            return s.value() / static_cast<double>(idx.size());
        },
        200, 9);
    CHECK(outcome.estimate.ci_low == doctest::Approx(0.42).epsilon(1e-12));
    CHECK(outcome.estimate.ci_high == doctest::Approx(0.42).epsilon(1e-12));
    CHECK(outcome.failed == 0);

    // B = 1: both interval endpoints equal the single replicate's value.
    const std::vector<double> sample{0.1, 0.9, 0.4};
    const auto single = bootstrap_estimate(
        Method::cc, sample.size(),
        [&](const std::vector<std::size_t>& idx) {
            double s = 0.0;
            for (auto i : idx) s += sample[i];
            return s / static_cast<double>(idx.size());
        },
        1, 5);
    CHECK(single.estimate.ci_low == single.estimate.ci_high);
    CHECK(single.estimate.replicates == 1);
}

TEST_CASE("bootstrap is reproducible and counts failures") {
    const std::vector<double> sample{0.2, 0.4, 0.6, 0.8};
    auto proc = [&](const std::vector<std::size_t>& idx) {
        double s = 0.0;
        for (auto i : idx) s += sample[i];
        return s / static_cast<double>(idx.size());
    };
    const auto a = bootstrap_estimate(Method::cc, sample.size(), proc, 500, 77);
    const auto b = bootstrap_estimate(Method::cc, sample.size(), proc, 500, 77);
    CHECK(a.estimate.ci_low == b.estimate.ci_low);
    CHECK(a.estimate.ci_high == b.estimate.ci_high);

    // A procedure that fails on some resamples is skipped and counted; the
    // predicates are chosen so the identity (point) pass never trips them.
    auto sometimes = [&](const std::vector<std::size_t>& idx) {
        if (idx[0] == idx[1]) throw DegenerateWeightsError("synthetic failure");
        return proc(idx);
    };
    // idx[0] == idx[1] happens for ~25% of replicates -> degenerate.
    CHECK_THROWS_AS(
        bootstrap_estimate(Method::cc, sample.size(), sometimes, 400, 3),
        BootstrapDegenerateError);

    auto rarely = [&](const std::vector<std::size_t>& idx) {
        if (idx[0] == 0 && idx[1] == 0 && idx[2] == 0) throw DegenerateWeightsError("x");
        return proc(idx);
    };
    const auto tolerated = bootstrap_estimate(Method::cc, sample.size(), rarely, 400, 3);
    CHECK(tolerated.failed > 0);
    CHECK(tolerated.failed * 10 <= 400);
    CHECK(tolerated.estimate.ci_low <= tolerated.estimate.ci_high);
}

TEST_CASE("estimators are permutation invariant") {
    Rng rng(55);
    const auto raw = random_scores(60, rng);
    std::vector<double> shuffled_raw = raw;
    Rng shuffle_rng(4);
    const auto idx = shuffled_indices(raw.size(), shuffle_rng);
    for (std::size_t i = 0; i < raw.size(); ++i) shuffled_raw[i] = raw[idx[i]];

    CHECK(estimate_direct(scores_of(raw)) == estimate_direct(scores_of(shuffled_raw)));
    CHECK(em_label_shift(scores_of(raw), 0.3).pi_hat ==
          em_label_shift(scores_of(shuffled_raw), 0.3).pi_hat);
    CHECK(grid_mle(scores_of(raw), 0.3, 1e-4) ==
          grid_mle(scores_of(shuffled_raw), 0.3, 1e-4));

    std::vector<Unit> units, shuffled_units;
    std::vector<double> e, shuffled_e;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        units.push_back(obs(i % 2, rng.bernoulli(0.4) ? 1 : 0));
        e.push_back(0.1 + 0.8 * rng.u01());
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        shuffled_units.push_back(units[idx[i]]);
        shuffled_e.push_back(e[idx[i]]);
    }
    const Dataset d1(units, 1), d2(shuffled_units, 1);
    IpwOptions clip;
    clip.clip_quantile = 0.9;
    CHECK(estimate_ipw(d1, ScoreSet::of(e, Population::validation_observed), clip) ==
          estimate_ipw(d2, ScoreSet::of(shuffled_e, Population::validation_observed),
                       clip));
    CHECK(estimate_cc(d1) == estimate_cc(d2));
}

TEST_CASE("label complement symmetry maps estimates to their mirrors") {
    Rng rng(66);
    const auto raw = random_scores(40, rng);
    std::vector<double> comp_raw;
    for (double s : raw) comp_raw.push_back(1.0 - s);
    const double p0 = 0.3;

    CHECK(estimate_direct(scores_of(raw)) ==
          doctest::Approx(1.0 - estimate_direct(scores_of(comp_raw))).epsilon(1e-12));

    const double pi = em_label_shift(scores_of(raw), p0).pi_hat;
    const double pi_c = em_label_shift(scores_of(comp_raw), 1.0 - p0).pi_hat;
    CHECK(pi == doctest::Approx(1.0 - pi_c).epsilon(1e-7));

    const double g = grid_mle(scores_of(raw), p0, 1e-5);
    const double g_c = grid_mle(scores_of(comp_raw), 1.0 - p0, 1e-5);
    CHECK(g == doctest::Approx(1.0 - g_c).epsilon(1e-4));

    std::vector<Unit> units, comp_units;
    std::vector<double> e;
    for (std::size_t i = 0; i < 30; ++i) {
        const std::uint8_t y = rng.bernoulli(0.4) ? 1 : 0;
        units.push_back(obs(i % 2, y));
        comp_units.push_back(obs(i % 2, 1 - y));
        e.push_back(0.1 + 0.8 * rng.u01());
    }
    const auto es = ScoreSet::of(e, Population::validation_observed);
    CHECK(estimate_ipw(Dataset(units, 1), es) ==
          doctest::Approx(1.0 - estimate_ipw(Dataset(comp_units, 1), es)).epsilon(1e-12));

    // Complementing the outcome swaps the method-of-moments conditionals.
    const auto m = estimate_mom(0.2, 0.9, 0.6);
    const auto mc = estimate_mom(0.9, 0.2, 0.6);
    CHECK(m.value == doctest::Approx(1.0 - mc.value).epsilon(1e-12));
}

TEST_CASE("all estimator outputs stay inside the clamped unit interval") {
    Rng rng(88);
    for (int trial = 0; trial < 10; ++trial) {
        const auto s = scores_of(random_scores(50, rng, 0.001, 0.999));
        const double p0 = 0.1 + 0.8 * rng.u01();
        const double pi = em_label_shift(s, p0).pi_hat;
        CHECK(pi >= 0.0);
        CHECK(pi <= 1.0);
        const auto adapted = adapt_scores(s, p0, 0.5);
        for (double v : adapted.scores) {
            CHECK(v >= kProbEps);
            CHECK(v <= 1.0 - kProbEps);
        }
    }
}
