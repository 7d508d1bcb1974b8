#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "proxyshift/models.hpp"
#include "support/oracles.hpp"

using namespace proxyshift;

namespace {

Unit obs(std::vector<std::uint8_t> x, std::uint8_t y) {
    Unit u;
    u.x = std::move(x);
    u.m = 0;
    u.y = y;
    return u;
}

Dataset random_observed(std::size_t n, std::size_t d, double prev, Rng& rng) {
    std::vector<Unit> units;
    units.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::uint8_t> x(d);
        for (auto& v : x) v = rng.bernoulli(0.5) ? 1 : 0;
        units.push_back(obs(std::move(x), rng.bernoulli(prev) ? 1 : 0));
    }
    return Dataset(std::move(units), d);
}

Dataset shuffled(const Dataset& data, std::uint64_t seed) {
    Rng rng(seed);
    auto idx = shuffled_indices(data.size(), rng);
    return data.subset(idx);
}

}  // namespace

TEST_CASE("naive Bayes closed-form Laplace counts") {
    const Dataset train({obs({1}, 1), obs({0}, 0)}, 1);
    const auto model = fit_naive_bayes(train, 1.0);
    CHECK(std::exp(model.log_cond[0][1]) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(std::exp(model.log_cond[0][0]) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(std::exp(model.log_prior) == doctest::Approx(0.5).epsilon(1e-12));

    // Hand Bayes rule: (1/2 * 2/3) / (1/2 * 2/3 + 1/2 * 1/3) = 2/3.
    CHECK(predict_naive_bayes(model, {1}) == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("naive Bayes smoothing keeps parameters interior") {
    const Dataset train({obs({1}, 1), obs({0}, 1), obs({1}, 1)}, 1);
    const auto model = fit_naive_bayes(train, 1.0);
    const double prior = std::exp(model.log_prior);
    CHECK(prior == doctest::Approx(4.0 / 5.0).epsilon(1e-12));  // (3+1)/(3+2)
    CHECK(prior < 1.0);

    // alpha -> infinity drives every conditional to 1/2.
    const auto flat = fit_naive_bayes(train, 1e9);
    CHECK(std::exp(flat.log_cond[0][1]) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(std::exp(flat.log_cond[0][0]) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("naive Bayes uninformative conditionals return the prior") {
    // 4 units of class 1 (2 with x=1) and 2 of class 0 (1 with x=1): all
    // conditionals are exactly 1/2 after smoothing, prior = 5/8.
    const Dataset train({obs({1}, 1), obs({1}, 1), obs({0}, 1), obs({0}, 1),
                         obs({1}, 0), obs({0}, 0)},
                        1);
    const auto model = fit_naive_bayes(train, 1.0);
    const double prior = std::exp(model.log_prior);
    CHECK(prior == doctest::Approx(5.0 / 8.0).epsilon(1e-12));
    CHECK(predict_naive_bayes(model, {0}) == doctest::Approx(prior).epsilon(1e-12));
    CHECK(predict_naive_bayes(model, {1}) == doctest::Approx(prior).epsilon(1e-12));
}

TEST_CASE("naive Bayes symmetric model complement property") {
    // Mirrored classes: score(x) = 1 - score(complement x).
    const Dataset train({obs({1, 0}, 1), obs({1, 1}, 1), obs({0, 1}, 0), obs({0, 0}, 0)},
                        2);
    const auto model = fit_naive_bayes(train, 1.0);
    for (std::uint8_t a = 0; a < 2; ++a)
        for (std::uint8_t b = 0; b < 2; ++b) {
            const double s = predict_naive_bayes(model, {a, b});
            const double sc = predict_naive_bayes(
                model, {std::uint8_t(1 - a), std::uint8_t(1 - b)});
            CHECK(s == doctest::Approx(1.0 - sc).epsilon(1e-10));
        }
}

TEST_CASE("naive Bayes errors") {
    const Dataset train({obs({1}, 1)}, 1);
    CHECK_THROWS_AS(fit_naive_bayes(train, 0.0), ArgumentError);
    CHECK_THROWS_AS(fit_naive_bayes(Dataset({}, 1), 1.0), InsufficientDataError);
    const auto model = fit_naive_bayes(train, 1.0);
    CHECK_THROWS_AS(predict_naive_bayes(model, {1, 0}), ArgumentError);
}

TEST_CASE("naive Bayes posterior is stable under duplicating the train set") {
    Rng rng(404);
    const auto train = random_observed(60, 3, 0.4, rng);
    std::vector<Unit> doubled_units(train.units());
    doubled_units.insert(doubled_units.end(), train.units().begin(), train.units().end());
    const Dataset doubled(std::move(doubled_units), 3);

    const auto a = fit_naive_bayes(train, 1.0);
    const auto b = fit_naive_bayes(doubled, 1.0);

    std::size_t n1 = 0;
    for (const auto& u : train.units()) n1 += *u.y;
    const double bound = 1.0 / static_cast<double>(std::min(n1, train.size() - n1));
    for (std::uint8_t i = 0; i < 8; ++i) {
        const std::vector<std::uint8_t> x{std::uint8_t(i & 1), std::uint8_t((i >> 1) & 1),
                                          std::uint8_t((i >> 2) & 1)};
        CHECK(std::abs(predict_naive_bayes(a, x) - predict_naive_bayes(b, x)) <= bound);
    }
}

TEST_CASE("fitted models are bitwise invariant to unit order") {
    Rng rng(2024);
    const auto train = random_observed(80, 4, 0.35, rng);
    const auto perm = shuffled(train, 555);

    const auto nb1 = fit_naive_bayes(train, 1.0);
    const auto nb2 = fit_naive_bayes(perm, 1.0);
    CHECK(nb1.log_prior == nb2.log_prior);
    for (std::size_t j = 0; j < 4; ++j)
        for (int c = 0; c < 2; ++c) CHECK(nb1.log_cond[j][c] == nb2.log_cond[j][c]);

    const auto lr1 = fit_logistic(train, LabelSelector::outcome, 0.01);
    const auto lr2 = fit_logistic(perm, LabelSelector::outcome, 0.01);
    CHECK(lr1.intercept == lr2.intercept);
    for (std::size_t j = 0; j < 4; ++j) CHECK(lr1.weights[j] == lr2.weights[j]);
}

TEST_CASE("logistic regression intercept-only optimum") {
    // Constant zero covariate carries no signal: the intercept matches the
    // base rate and the weight stays at zero.
    std::vector<Unit> units;
    for (int i = 0; i < 10; ++i) units.push_back(obs({0}, i < 3 ? 1 : 0));
    const Dataset train(std::move(units), 1);
    const auto model = fit_logistic(train, LabelSelector::outcome, 0.05);
    CHECK(std::abs(model.weights[0]) < 1e-9);
    CHECK(model.intercept == doctest::Approx(logit(0.3)).epsilon(1e-6));
}

TEST_CASE("logistic regression penalty dominance") {
    Rng rng(77);
    const auto train = random_observed(100, 3, 0.4, rng);
    const auto model = fit_logistic(train, LabelSelector::outcome, 1e6);
    for (double w : model.weights) CHECK(std::abs(w) <= 1e-3);
    const double base = observed_prevalence(train);
    CHECK(model.intercept == doctest::Approx(logit(base)).epsilon(1e-3));
}

TEST_CASE("logistic gradient matches central finite differences") {
    Rng rng(31);
    const auto train = random_observed(50, 3, 0.45, rng);
    const auto design = detail::make_design(train, LabelSelector::outcome);
    const double lambda = 0.02;
    const double h = 1e-5;

    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> theta(4);
        for (auto& t : theta) t = 2.0 * rng.u01() - 1.0;
        const auto grad = detail::logistic_gradient(design, theta, lambda);
        for (std::size_t j = 0; j < theta.size(); ++j) {
            auto hi = theta, lo = theta;
            hi[j] += h;
            lo[j] -= h;
            const double fd = (detail::logistic_objective(design, hi, lambda) -
                               detail::logistic_objective(design, lo, lambda)) /
                              (2.0 * h);
            CHECK(grad[j] ==
                  doctest::Approx(fd).epsilon(1e-6).scale(std::max(1.0, std::abs(fd))));
        }
    }
}

TEST_CASE("logistic objective is convex: random restarts agree") {
    Rng rng(900);
    const auto train = random_observed(60, 3, 0.5, rng);
    const auto design = detail::make_design(train, LabelSelector::outcome);

    std::vector<double> objectives;
    for (int trial = 0; trial < 10; ++trial) {
        detail::NewtonOptions opt;
        opt.l2 = 0.1;
        opt.init.resize(4);
        for (auto& t : opt.init) t = 4.0 * rng.u01() - 2.0;
        objectives.push_back(detail::newton_logistic(design, opt).objective);
    }
    const auto [lo, hi] = std::minmax_element(objectives.begin(), objectives.end());
    CHECK(*hi - *lo <= 1e-8);
}

TEST_CASE("predict_logistic closed forms") {
    LogisticModel flat{{0.0}, 0.0, 0.0};
    CHECK(predict_logistic(flat, {0}) == 0.5);
    CHECK(predict_logistic(flat, {1}) == 0.5);

    LogisticModel saturated{{0.0}, 40.0, 0.0};
    CHECK(predict_logistic(saturated, {0}) == doctest::Approx(1.0 - 1e-6).epsilon(1e-12));

    LogisticModel odds3{{std::log(3.0)}, 0.0, 0.0};
    CHECK(predict_logistic(odds3, {1}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(predict_logistic(odds3, {1, 1}), ArgumentError);
}

TEST_CASE("cross validation fold sizes and singleton grid") {
    const auto fold = detail::make_folds(103, 10, detail::kCvFoldSeed);
    std::vector<std::size_t> sizes(10, 0);
    for (auto f : fold) ++sizes[f];
    std::size_t tens = 0, elevens = 0;
    for (auto s : sizes) {
        if (s == 10) ++tens;
        if (s == 11) ++elevens;
    }
    CHECK(tens == 7);
    CHECK(elevens == 3);

    Rng rng(5);
    const auto train = random_observed(40, 2, 0.5, rng);
    const auto report = cross_validate(train, LabelSelector::outcome, {0.1}, 5);
    CHECK(report.chosen == 0.1);
    CHECK(report.grid.size() == 1);
    for (double loss : report.mean_loss) CHECK(std::isfinite(loss));

    CHECK_THROWS_AS(cross_validate(train, LabelSelector::outcome, {}, 5), ArgumentError);
    CHECK_THROWS_AS(cross_validate(train, LabelSelector::outcome, {0.1}, 41),
                    ArgumentError);
    CHECK_THROWS_AS(cross_validate(train, LabelSelector::outcome, {0.1}, 1),
                    ArgumentError);
}

TEST_CASE("cross validation prefers heavier shrinkage on pure-noise labels") {
    // Noise task: y independent of x.  Informative task: y drives x.  Over
    // 25 seeded repetitions the chosen lambda for noise should be at least
    // the informative one in >= 80%.
    std::size_t ordered = 0;
    const auto grid = default_lambda_grid();
    for (std::uint64_t rep = 0; rep < 25; ++rep) {
        Rng rng(1000 + rep);
        const std::size_t n = 200, d = 20;

        std::vector<Unit> noise_units, info_units;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t y = rng.bernoulli(0.5) ? 1 : 0;
            std::vector<std::uint8_t> xn(d), xi(d);
            for (std::size_t j = 0; j < d; ++j) {
                xn[j] = rng.bernoulli(0.5) ? 1 : 0;
                xi[j] = rng.bernoulli(y ? 0.65 : 0.35) ? 1 : 0;
            }
            noise_units.push_back(obs(std::move(xn), y));
            info_units.push_back(obs(std::move(xi), y));
        }
        const auto noise_cv = cross_validate(Dataset(std::move(noise_units), d),
                                             LabelSelector::outcome, grid, 10);
        const auto info_cv = cross_validate(Dataset(std::move(info_units), d),
                                            LabelSelector::outcome, grid, 10);
        if (noise_cv.chosen >= info_cv.chosen) ++ordered;
    }
    CHECK(ordered >= 20);
}

TEST_CASE("cross validation breaks loss ties toward larger lambda") {
    // With a constant covariate every lambda fits the same intercept-only
    // model, so all losses tie and the largest candidate must win.
    std::vector<Unit> units;
    for (int i = 0; i < 30; ++i) units.push_back(obs({0}, i < 12 ? 1 : 0));
    const Dataset train(std::move(units), 1);
    const auto report = cross_validate(train, LabelSelector::outcome, {0.5, 2.0, 1.0}, 5);
    CHECK(report.chosen == 2.0);
}

TEST_CASE("fit_logistic on missingness labels uses all units") {
    std::vector<Unit> units;
    Rng rng(8);
    for (int i = 0; i < 40; ++i) {
        Unit u;
        u.x = {rng.bernoulli(0.5) ? std::uint8_t(1) : std::uint8_t(0)};
        u.m = rng.bernoulli(u.x[0] ? 0.7 : 0.2) ? 1 : 0;
        if (u.m == 0) u.y = rng.bernoulli(0.5) ? 1 : 0;
        units.push_back(std::move(u));
    }
    const Dataset data(std::move(units), 1);
    const auto model = fit_logistic(data, LabelSelector::missingness, 0.01);
    CHECK(model.weights[0] > 0.0);  // x = 1 raises the missingness odds

    CHECK_THROWS_AS(fit_logistic(data, LabelSelector::outcome, 0.01), ArgumentError);
}
