#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "proxyshift/calibrate.hpp"
#include "proxyshift/coherence.hpp"
#include "proxyshift/core.hpp"
#include "proxyshift/csv.hpp"
#include "proxyshift/datagen.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/estimators.hpp"
#include "proxyshift/manifest.hpp"
#include "proxyshift/models.hpp"

namespace proxyshift {

enum class ModelKind { naive_bayes, logistic };

inline const char* model_kind_name(ModelKind k) {
    return k == ModelKind::naive_bayes ? "naive_bayes" : "logistic";
}

struct PipelineOptions {
    ModelKind model_kind = ModelKind::naive_bayes;  // prediction model for Y | X, M=0
    bool calibrate = true;
    std::optional<double> ipw_clip_quantile;
    std::size_t bootstrap_B = 1000;
    double split_fraction = 0.5;
    std::uint64_t seed = 0;
    Population coherence_population = Population::pooled;
    double nb_alpha = 1.0;
    std::size_t cv_folds = 10;
    std::vector<double> lambda_grid = default_lambda_grid();

    void validate() const {
        if (bootstrap_B < 1) throw ArgumentError("bootstrap_B must be >= 1");
        if (!(split_fraction > 0.0 && split_fraction < 1.0))
            throw ArgumentError("split_fraction must lie inside (0,1)");
        if (nb_alpha <= 0.0) throw ArgumentError("nb_alpha must be positive");
        if (lambda_grid.empty()) throw ArgumentError("lambda grid must be non-empty");
    }
};

struct RunResult {
    std::vector<Estimate> estimates;
    std::optional<CoherenceResult> coherence_calibrated;  // present when calibrating
    CoherenceResult coherence_uncalibrated;
    Json manifest;
};

inline const Estimate* find_estimate(const RunResult& result, Method method) {
    for (const auto& e : result.estimates)
        if (e.method == method) return &e;
    return nullptr;
}

namespace detail {

inline constexpr std::uint64_t kTagPropensitySplit = 1;
inline constexpr std::uint64_t kTagBootstrapBase = 100;

template <typename F>
auto pipeline_step(const char* step, F&& f) {
    try {
        return f();
    } catch (const PipelineError&) {
        throw;
    } catch (const Error& e) {
        throw PipelineError(step, e.what());
    }
}

inline bool single_class(const std::vector<std::uint8_t>& labels) {
    for (std::size_t i = 1; i < labels.size(); ++i)
        if (labels[i] != labels[0]) return false;
    return true;
}

// Fraction split of arbitrary indices, same rounding rule as split_data.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> fraction_split(
    std::size_t n, double fraction, std::uint64_t seed) {
    Rng rng(seed);
    auto idx = shuffled_indices(n, rng);
    auto n_head = static_cast<std::size_t>(
        std::lround(fraction * static_cast<double>(n)));
    n_head = std::clamp<std::size_t>(n_head, 1, n - 1);
    return {std::vector<std::size_t>(idx.begin(), idx.begin() + n_head),
            std::vector<std::size_t>(idx.begin() + n_head, idx.end())};
}

}  // namespace detail

// The full estimation pipeline on one dataset: split, fit the outcome and
// propensity models, score the validation sets, Platt-calibrate, run EM, and
// bootstrap every estimator from the same split.
inline RunResult run_pipeline(const Dataset& dataset, const PipelineOptions& options) {
    options.validate();
    if (dataset.observed_count() < 10)
        throw InsufficientDataError("pipeline needs at least 10 observed units");
    if (dataset.missing_count() < 1)
        throw InsufficientDataError("pipeline needs at least 1 missing unit");

    const SplitDataset split = detail::pipeline_step("split", [&] {
        return split_data(dataset, options.split_fraction, options.seed);
    });

    if (!is_interior(observed_prevalence(dataset)))
        throw PipelineError("source-prevalence", "observed outcomes are single-class");
    const double pm = dataset.missing_fraction();

    // Source prevalences are matched to the sample behind each score set so
    // their estimation errors cancel to first order in the scaled-likelihood
    // ratio: the raw model carries the train distribution, the calibrated
    // scores the held-out one.
    const double p0_raw = clamp_prob(observed_prevalence(split.train));
    const double p0_cal = clamp_prob(observed_prevalence(split.validation_observed));

    // --- outcome model on the training half of the observed cases ---
    std::vector<std::uint8_t> train_y;
    train_y.reserve(split.train.size());
    for (const auto& u : split.train.units()) train_y.push_back(*u.y);
    if (detail::single_class(train_y))
        throw PipelineError("fit-outcome-model", "training outcomes are single-class");

    std::function<double(const Unit&)> outcome_score;
    Json outcome_json;
    if (options.model_kind == ModelKind::naive_bayes) {
        auto model = detail::pipeline_step("fit-outcome-model", [&] {
            return fit_naive_bayes(split.train, options.nb_alpha);
        });
        outcome_json = to_json(model);
        outcome_score = [model = std::move(model)](const Unit& u) {
            return predict_naive_bayes(model, u.x);
        };
    } else {
        const std::size_t folds = std::min(options.cv_folds, split.train.size());
        if (folds < 2)
            throw PipelineError("fit-outcome-model", "too few training units for cross validation");
        auto cv = detail::pipeline_step("fit-outcome-model", [&] {
            return cross_validate(split.train, LabelSelector::outcome,
                                  options.lambda_grid, folds);
        });
        auto model = detail::pipeline_step("fit-outcome-model", [&] {
            return fit_logistic(split.train, LabelSelector::outcome, cv.chosen);
        });
        outcome_json = to_json(model);
        outcome_json["cv"] = to_json(cv);
        outcome_score = [model = std::move(model)](const Unit& u) {
            return predict_logistic(model, u.x);
        };
    }

    // --- propensity model: fraction split over all units with m as label ---
    const auto [prop_train_idx, prop_val_idx] = detail::fraction_split(
        dataset.size(), options.split_fraction,
        derive_seed(options.seed, detail::kTagPropensitySplit));
    const Dataset prop_train = dataset.subset(prop_train_idx);
    const Dataset prop_val = dataset.subset(prop_val_idx);

    std::vector<std::uint8_t> prop_train_m, prop_val_m;
    for (const auto& u : prop_train.units()) prop_train_m.push_back(u.m);
    for (const auto& u : prop_val.units()) prop_val_m.push_back(u.m);
    if (detail::single_class(prop_train_m))
        throw PipelineError("fit-propensity-model",
                            "missingness labels are single-class in the training half");

    const std::size_t prop_folds = std::min(options.cv_folds, prop_train.size());
    if (prop_folds < 2)
        throw PipelineError("fit-propensity-model", "too few units for cross validation");
    auto prop_cv = detail::pipeline_step("fit-propensity-model", [&] {
        return cross_validate(prop_train, LabelSelector::missingness,
                              options.lambda_grid, prop_folds);
    });
    auto prop_model = detail::pipeline_step("fit-propensity-model", [&] {
        return fit_logistic(prop_train, LabelSelector::missingness, prop_cv.chosen);
    });
    auto propensity_raw = [&prop_model](const Unit& u) {
        return predict_logistic(prop_model, u.x);
    };

    // --- validation scores ---
    auto score_units = [](const Dataset& ds, const std::function<double(const Unit&)>& f,
                          Population pop) {
        std::vector<double> s;
        s.reserve(ds.size());
        for (const auto& u : ds.units()) s.push_back(f(u));
        return ScoreSet::of(std::move(s), pop);
    };

    const ScoreSet raw_obs = score_units(split.validation_observed, outcome_score,
                                         Population::validation_observed);
    const ScoreSet raw_mis = score_units(split.validation_missing, outcome_score,
                                         Population::validation_missing);
    std::vector<std::uint8_t> val_obs_y;
    for (const auto& u : split.validation_observed.units()) val_obs_y.push_back(*u.y);

    std::optional<PlattParams> platt_y, platt_m;
    std::optional<ScoreSet> cal_obs, cal_mis;
    Json calibration_json;
    if (options.calibrate) {
        if (split.validation_observed.size() < 2)
            throw PipelineError("calibrate", "held-out observed units are required for calibration");
        platt_y = detail::pipeline_step("calibrate", [&] {
            return fit_platt(raw_obs, val_obs_y);
        });
        cal_obs = apply_platt(*platt_y, raw_obs);
        cal_mis = apply_platt(*platt_y, raw_mis);

        const ScoreSet prop_val_raw =
            score_units(prop_val, propensity_raw, Population::pooled);
        platt_m = detail::pipeline_step("calibrate", [&] {
            return fit_platt(prop_val_raw, prop_val_m);
        });

        Json jy;
        jy["params"] = to_json(*platt_y);
        jy["pre_loss"] = score_log_loss(raw_obs, val_obs_y);
        jy["post_loss"] = score_log_loss(*cal_obs, val_obs_y);
        Json jm;
        jm["params"] = to_json(*platt_m);
        jm["pre_loss"] = score_log_loss(prop_val_raw, prop_val_m);
        jm["post_loss"] = score_log_loss(apply_platt(*platt_m, prop_val_raw), prop_val_m);
        calibration_json["outcome"] = std::move(jy);
        calibration_json["propensity"] = std::move(jm);
    }

    auto propensity_cal = [&](const Unit& u) {
        return clamp_prob(sigmoid(platt_m->inv_temperature * logit(propensity_raw(u)) +
                                  platt_m->offset));
    };

    // --- estimators, all bootstrapped over their validation inputs ---
    RunResult result;
    auto boot = [&](Method method, std::size_t n,
                    const std::function<double(const std::vector<std::size_t>&)>& proc) {
        const auto outcome = bootstrap_estimate(
            method, n, proc, options.bootstrap_B,
            derive_seed(options.seed,
                        detail::kTagBootstrapBase + static_cast<std::uint64_t>(method)));
        result.estimates.push_back(outcome.estimate);
        return outcome.estimate;
    };

    // cc: resamples the held-out observed outcomes.
    boot(Method::cc, val_obs_y.size(), [&](const std::vector<std::size_t>& idx) {
        std::size_t ones = 0;
        for (std::size_t i : idx) ones += val_obs_y[i];
        return static_cast<double>(ones) / static_cast<double>(idx.size());
    });

    // ipw / cipw: resample (propensity, outcome) pairs on the held-out
    // observed units.
    IpwOptions ipw_options;
    ipw_options.clip_quantile = options.ipw_clip_quantile;
    ipw_options.missing_rate = pm;
    const ScoreSet prop_obs_raw = score_units(split.validation_observed, propensity_raw,
                                              Population::validation_observed);
    auto ipw_proc = [&](const ScoreSet& e_scores) {
        return [&, e = e_scores.scores](const std::vector<std::size_t>& idx) {
            std::vector<std::pair<double, double>> ey;
            ey.reserve(idx.size());
            for (std::size_t i : idx)
                ey.emplace_back(e[i], static_cast<double>(val_obs_y[i]));
            return detail::ipw_core(std::move(ey), ipw_options);
        };
    };
    boot(Method::ipw, val_obs_y.size(), ipw_proc(prop_obs_raw));
    if (options.calibrate) {
        const ScoreSet prop_obs_cal = score_units(
            split.validation_observed, propensity_cal, Population::validation_observed);
        boot(Method::cipw, val_obs_y.size(), ipw_proc(prop_obs_cal));
    }

    // direct / cdirect: resample the missing-case scores.
    auto direct_proc = [&](const ScoreSet& scores) {
        return [&, s = scores.scores](const std::vector<std::size_t>& idx) {
            std::vector<double> sub;
            sub.reserve(idx.size());
            for (std::size_t i : idx) sub.push_back(s[i]);
            return estimate_direct(
                ScoreSet{std::move(sub), scores.calibrated, scores.population});
        };
    };
    boot(Method::direct, raw_mis.size(), direct_proc(raw_mis));
    if (options.calibrate) boot(Method::cdirect, cal_mis->size(), direct_proc(*cal_mis));

    // proxy / cproxy: EM on resampled missing-case scores, each against the
    // source prevalence of its own score sample.
    auto proxy_proc = [&](const ScoreSet& scores, double p0) {
        return [&, s = scores.scores, calib = scores.calibrated,
                pop = scores.population, p0](const std::vector<std::size_t>& idx) {
            std::vector<double> sub;
            sub.reserve(idx.size());
            for (std::size_t i : idx) sub.push_back(s[i]);
            return em_label_shift(ScoreSet{std::move(sub), calib, pop}, p0).pi_hat;
        };
    };
    const ProxyFit proxy_fit = em_label_shift(raw_mis, p0_raw);
    boot(Method::proxy, raw_mis.size(), proxy_proc(raw_mis, p0_raw));
    std::optional<ProxyFit> cproxy_fit;
    if (options.calibrate) {
        cproxy_fit = em_label_shift(*cal_mis, p0_cal);
        boot(Method::cproxy, cal_mis->size(), proxy_proc(*cal_mis, p0_cal));
    }

    // mom: scalar-covariate method of moments; class conditionals from all
    // observed units, covariate mean resampled over the missing units.
    Json mom_json;
    if (dataset.dim() == 1) {
        std::array<std::size_t, 2> count{0, 0}, ones{0, 0};
        std::vector<double> missing_x;
        for (const auto& u : dataset.units()) {
            if (u.observed()) {
                ++count[*u.y];
                ones[*u.y] += u.x[0];
            } else {
                missing_x.push_back(static_cast<double>(u.x[0]));
            }
        }
        if (count[0] == 0 || count[1] == 0) {
            mom_json["skipped"] = "observed outcomes are single-class";
        } else {
            const double beta0 = static_cast<double>(ones[0]) / static_cast<double>(count[0]);
            const double beta1 = static_cast<double>(ones[1]) / static_cast<double>(count[1]);
            if (std::abs(beta1 - beta0) < 1e-12) {
                mom_json["skipped"] = "class conditionals coincide; estimand unidentified";
            } else {
                mom_json["beta0"] = beta0;
                mom_json["beta1"] = beta1;
                boot(Method::mom, missing_x.size(), [&](const std::vector<std::size_t>& idx) {
                    KahanSum s;
                    for (std::size_t i : idx) s.add(missing_x[i]);
                    return estimate_mom(beta0, beta1,
                                        s.value() / static_cast<double>(idx.size()))
                        .value;
                });
            }
        }
    }

    // --- propensity coherence on the chosen validation population ---
    auto coherence_for = [&](bool calibrated) {
        std::vector<const Dataset*> parts;
        if (options.coherence_population != Population::validation_missing)
            parts.push_back(&split.validation_observed);
        if (options.coherence_population != Population::validation_observed)
            parts.push_back(&split.validation_missing);

        const double pi = clamp_prob(calibrated ? cproxy_fit->pi_hat : proxy_fit.pi_hat);
        const double p0 = calibrated ? p0_cal : p0_raw;
        std::vector<double> direct, stable;
        for (const Dataset* part : parts) {
            for (const auto& u : part->units()) {
                direct.push_back(calibrated ? propensity_cal(u) : propensity_raw(u));
                double s = outcome_score(u);
                if (calibrated)
                    s = clamp_prob(sigmoid(platt_y->inv_temperature * logit(s) +
                                           platt_y->offset));
                stable.push_back(stable_propensity(s, p0, pi, pm));
            }
        }
        PropensityPair pair;
        pair.direct = ScoreSet::of(std::move(direct), options.coherence_population,
                                   calibrated);
        pair.stable = ScoreSet::of(std::move(stable), options.coherence_population,
                                   calibrated);
        pair.population = options.coherence_population;
        return coherence_score(pair);
    };
    result.coherence_uncalibrated = coherence_for(false);
    if (options.calibrate) result.coherence_calibrated = coherence_for(true);

    // --- manifest ---
    Json manifest;
    Json opts;
    opts["model_kind"] = model_kind_name(options.model_kind);
    opts["calibrate"] = options.calibrate;
    if (options.ipw_clip_quantile) opts["ipw_clip_quantile"] = *options.ipw_clip_quantile;
    opts["bootstrap_B"] = options.bootstrap_B;
    opts["split_fraction"] = options.split_fraction;
    opts["seed"] = options.seed;
    opts["coherence_population"] = population_name(options.coherence_population);
    opts["nb_alpha"] = options.nb_alpha;
    opts["cv_folds"] = options.cv_folds;
    opts["lambda_grid"] = options.lambda_grid;
    manifest["options"] = std::move(opts);

    Json data;
    data["n"] = dataset.size();
    data["dim"] = dataset.dim();
    data["observed"] = dataset.observed_count();
    data["missing"] = dataset.missing_count();
    data["train"] = split.train.size();
    data["validation_observed"] = split.validation_observed.size();
    data["validation_missing"] = split.validation_missing.size();
    data["source_prevalence_train"] = p0_raw;
    data["source_prevalence_validation"] = p0_cal;
    data["missing_rate"] = pm;
    manifest["data"] = std::move(data);

    manifest["outcome_model"] = std::move(outcome_json);
    Json prop_json = to_json(prop_model);
    prop_json["cv"] = to_json(prop_cv);
    manifest["propensity_model"] = std::move(prop_json);
    if (options.calibrate) manifest["calibration"] = std::move(calibration_json);

    Json proxy_json;
    proxy_json["pi"] = proxy_fit.pi_hat;
    proxy_json["iterations"] = proxy_fit.iterations;
    proxy_json["converged"] = proxy_fit.converged;
    manifest["proxy_fit"] = std::move(proxy_json);
    if (cproxy_fit) {
        Json j;
        j["pi"] = cproxy_fit->pi_hat;
        j["iterations"] = cproxy_fit->iterations;
        j["converged"] = cproxy_fit->converged;
        manifest["cproxy_fit"] = std::move(j);
    }
    if (!mom_json.is_null()) manifest["mom"] = std::move(mom_json);

    Json ests = Json::array();
    for (const auto& e : result.estimates) ests.push_back(to_json(e));
    manifest["estimates"] = std::move(ests);

    Json coh;
    Json unc;
    unc["delta"] = result.coherence_uncalibrated.delta;
    unc["population"] = population_name(result.coherence_uncalibrated.population);
    coh["uncalibrated"] = std::move(unc);
    if (result.coherence_calibrated) {
        Json cal;
        cal["delta"] = result.coherence_calibrated->delta;
        cal["population"] = population_name(result.coherence_calibrated->population);
        coh["calibrated"] = std::move(cal);
    }
    manifest["coherence"] = std::move(coh);
    result.manifest = std::move(manifest);
    return result;
}

// ---------------------------------------------------------------------------
// phi-grid sweeps
// ---------------------------------------------------------------------------

enum class SimFamily { toy, highdim };

inline const char* sim_family_name(SimFamily f) {
    return f == SimFamily::toy ? "toy" : "highdim";
}

struct SweepEstimateRow {
    double phi = 0.0;
    std::uint64_t seed = 0;
    Method method = Method::cc;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t replicates = 0;
    std::optional<double> abs_error;  // |point - oracle mu1| when an oracle exists
    bool calibrated = false;
};

struct SweepCoherenceRow {
    double phi = 0.0;
    std::uint64_t seed = 0;
    double delta = 0.0;
    bool calibrated = false;
    Population population = Population::pooled;
};

struct SweepAggregateRow {
    double phi = 0.0;
    Method method = Method::cc;
    bool calibrated = false;
    double mean_point = 0.0;
    std::optional<double> mean_abs_error;
    std::size_t seeds = 0;
};

struct SweepErrorRow {
    double phi = 0.0;
    std::uint64_t seed = 0;
    std::string step;
    std::string message;
};

struct SweepTable {
    std::vector<SweepEstimateRow> estimates;
    std::vector<SweepCoherenceRow> coherence;
    std::vector<SweepAggregateRow> aggregates;
    std::vector<SweepErrorRow> errors;
    Json manifest;
};

namespace detail {

inline std::size_t sweep_worker_count(std::size_t cells) {
    std::size_t workers = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("PROXYSHIFT_WORKERS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        workers = parsed > 0 ? static_cast<std::size_t>(parsed) : 1;
    }
    return std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(cells, 1));
}

struct SweepCell {
    std::size_t phi_index = 0;
    std::uint64_t seed = 0;
    std::unique_ptr<RunResult> result;
    std::string error_step;
    std::string error_message;
};

// Runs one pipeline per (phi, seed) cell on a bounded pool.  Each cell owns
// its substream through the cell seed; rows are assembled afterwards in
// (phi, seed, method) order regardless of completion order.
inline SweepTable run_sweep(
    const std::vector<double>& phi_grid, const std::vector<std::uint64_t>& seeds,
    const PipelineOptions& options,
    const std::function<SimDraw(std::size_t, std::uint64_t)>& draw_cell,
    const std::vector<double>& oracle_mu1) {
    if (phi_grid.empty()) throw ArgumentError("phi grid must be non-empty");
    if (seeds.empty()) throw ArgumentError("seed list must be non-empty");

    std::vector<SweepCell> cells;
    cells.reserve(phi_grid.size() * seeds.size());
    for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
        for (std::uint64_t seed : seeds) {
            SweepCell cell;
            cell.phi_index = pi;
            cell.seed = seed;
            cells.push_back(std::move(cell));
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= cells.size()) return;
            SweepCell& cell = cells[k];
            try {
                const SimDraw draw = draw_cell(cell.phi_index, cell.seed);
                PipelineOptions cell_options = options;
                cell_options.seed = cell.seed;
                cell.result =
                    std::make_unique<RunResult>(run_pipeline(draw.dataset, cell_options));
            } catch (const PipelineError& e) {
                cell.error_step = e.step;
                cell.error_message = e.what();
            } catch (const Error& e) {
                cell.error_step = "pipeline";
                cell.error_message = e.what();
            }
        }
    };
    const std::size_t workers = sweep_worker_count(cells.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    SweepTable table;
    Json audit = Json::array();
    for (const auto& cell : cells) {
        const double phi = phi_grid[cell.phi_index];
        if (!cell.result) {
            table.errors.push_back(
                SweepErrorRow{phi, cell.seed, cell.error_step, cell.error_message});
            continue;
        }
        if (cell.result->manifest.contains("calibration")) {
            const auto& cal = cell.result->manifest.at("calibration");
            Json row;
            row["phi"] = phi;
            row["seed"] = cell.seed;
            row["outcome_pre"] = cal.at("outcome").at("pre_loss");
            row["outcome_post"] = cal.at("outcome").at("post_loss");
            row["propensity_pre"] = cal.at("propensity").at("pre_loss");
            row["propensity_post"] = cal.at("propensity").at("post_loss");
            audit.push_back(std::move(row));
        }
        for (const auto& est : cell.result->estimates) {
            SweepEstimateRow row;
            row.phi = phi;
            row.seed = cell.seed;
            row.method = est.method;
            row.point = est.point;
            row.ci_low = est.ci_low;
            row.ci_high = est.ci_high;
            row.replicates = est.replicates;
            if (!oracle_mu1.empty())
                row.abs_error = std::abs(est.point - oracle_mu1[cell.phi_index]);
            row.calibrated = method_is_calibrated(est.method);
            table.estimates.push_back(row);
        }
        table.coherence.push_back(SweepCoherenceRow{
            phi, cell.seed, cell.result->coherence_uncalibrated.delta, false,
            cell.result->coherence_uncalibrated.population});
        if (cell.result->coherence_calibrated)
            table.coherence.push_back(SweepCoherenceRow{
                phi, cell.seed, cell.result->coherence_calibrated->delta, true,
                cell.result->coherence_calibrated->population});
    }

    // Aggregates recomputed from the emitted rows, grouped by (phi, method).
    for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
        for (Method method :
             {Method::cc, Method::ipw, Method::cipw, Method::direct, Method::cdirect,
              Method::proxy, Method::cproxy, Method::mom}) {
            KahanSum point_sum, err_sum;
            std::size_t count = 0;
            bool have_error = true;
            for (const auto& row : table.estimates) {
                if (row.method != method || row.phi != phi_grid[pi]) continue;
                point_sum.add(row.point);
                if (row.abs_error)
                    err_sum.add(*row.abs_error);
                else
                    have_error = false;
                ++count;
            }
            if (count == 0) continue;
            SweepAggregateRow agg;
            agg.phi = phi_grid[pi];
            agg.method = method;
            agg.calibrated = method_is_calibrated(method);
            agg.mean_point = point_sum.value() / static_cast<double>(count);
            if (have_error)
                agg.mean_abs_error = err_sum.value() / static_cast<double>(count);
            agg.seeds = count;
            table.aggregates.push_back(agg);
        }
    }
    table.manifest["calibration_audit"] = std::move(audit);
    return table;
}

}  // namespace detail

// Sweep the synthetic designs over a phi grid: links are re-solved per phi
// so the conditional-mean targets hold along the whole grid.
inline SweepTable run_phi_grid(SimFamily family, std::size_t n,
                               const std::vector<double>& phi_grid,
                               const PipelineOptions& options,
                               const std::vector<std::uint64_t>& seeds) {
    if (n == 0) throw ArgumentError("sweep needs a positive sample size");
    std::vector<std::optional<SimConfig>> configs;
    std::vector<std::string> solve_errors(phi_grid.size());
    std::vector<double> oracle;
    Json phi_json = Json::array();
    for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
        Json j;
        j["phi"] = phi_grid[pi];
        try {
            SimConfig config = family == SimFamily::toy ? toy_config(phi_grid[pi])
                                                        : highdim_config(phi_grid[pi]);
            config.n = n;
            const auto implied = implied_moments(config);
            oracle.push_back(implied.mu1);
            j["beta0"] = config.beta0;
            j["beta"] = config.beta;
            j["p_m"] = implied.p_m;
            j["mu0"] = implied.mu0;
            j["mu1"] = implied.mu1;
            configs.push_back(std::move(config));
        } catch (const Error& e) {
            solve_errors[pi] = e.what();
            oracle.push_back(std::numeric_limits<double>::quiet_NaN());
            j["error"] = e.what();
            configs.push_back(std::nullopt);
        }
        phi_json.push_back(std::move(j));
    }

    auto table = detail::run_sweep(
        phi_grid, seeds, options,
        [&](std::size_t phi_index, std::uint64_t seed) {
            if (!configs[phi_index])
                throw PipelineError("solve-links", solve_errors[phi_index]);
            SimConfig config = *configs[phi_index];
            config.seed = seed;
            return generate(config);
        },
        oracle);

    table.manifest["family"] = sim_family_name(family);
    table.manifest["n"] = n;
    table.manifest["phi_grid"] = std::move(phi_json);
    table.manifest["seeds"] = seeds;
    table.manifest["model_kind"] = model_kind_name(options.model_kind);
    table.manifest["bootstrap_B"] = options.bootstrap_B;
    return table;
}

// Sweep with missingness induced on an externally loaded, fully observed
// dataset; links are re-solved per phi against its empirical distribution.
inline SweepTable run_phi_grid_induced(const Dataset& base, const MomentTargets& targets,
                                       const std::vector<double>& phi_grid,
                                       const PipelineOptions& options,
                                       const std::vector<std::uint64_t>& seeds) {
    std::vector<std::string> solve_errors(phi_grid.size());
    std::vector<double> oracle;
    Json phi_json = Json::array();
    for (std::size_t pi = 0; pi < phi_grid.size(); ++pi) {
        Json j;
        j["phi"] = phi_grid[pi];
        try {
            const auto induced = induce_missingness(base, targets, phi_grid[pi], 0);
            oracle.push_back(induced.implied.mu1);
            j["beta0"] = induced.beta0;
            j["beta"] = induced.beta;
            j["p_m"] = induced.implied.p_m;
            j["mu0"] = induced.implied.mu0;
            j["mu1"] = induced.implied.mu1;
        } catch (const Error& e) {
            solve_errors[pi] = e.what();
            oracle.push_back(std::numeric_limits<double>::quiet_NaN());
            j["error"] = e.what();
        }
        phi_json.push_back(std::move(j));
    }

    auto table = detail::run_sweep(
        phi_grid, seeds, options,
        [&](std::size_t phi_index, std::uint64_t seed) {
            if (!solve_errors[phi_index].empty())
                throw PipelineError("solve-links", solve_errors[phi_index]);
            return induce_missingness(base, targets, phi_grid[phi_index], seed).draw;
        },
        oracle);

    table.manifest["family"] = "csv-induced";
    table.manifest["n"] = base.size();
    table.manifest["targets"] = Json{{"mu0", targets.mu0_target}, {"mu1", targets.mu1_target}};
    table.manifest["phi_grid"] = std::move(phi_json);
    table.manifest["seeds"] = seeds;
    table.manifest["model_kind"] = model_kind_name(options.model_kind);
    table.manifest["bootstrap_B"] = options.bootstrap_B;
    return table;
}

// ---------------------------------------------------------------------------
// writers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string sanitize_csv_field(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

}  // namespace detail

// Emits <prefix>_estimates.csv, <prefix>_coherence.csv,
// <prefix>_aggregates.csv and <prefix>_errors.csv.
inline void write_results(const SweepTable& table, const std::string& prefix) {
    {
        std::ofstream out(prefix + "_estimates.csv");
        if (!out) throw Error("cannot write '" + prefix + "_estimates.csv'");
        out << "phi,seed,method,point,ci_low,ci_high,abs_error,calibrated\n";
        for (const auto& r : table.estimates) {
            out << detail::format_double(r.phi) << "," << r.seed << ","
                << method_name(r.method) << "," << detail::format_double(r.point) << ","
                << detail::format_double(r.ci_low) << ","
                << detail::format_double(r.ci_high) << ","
                << (r.abs_error ? detail::format_double(*r.abs_error) : std::string())
                << "," << (r.calibrated ? "true" : "false") << "\n";
        }
    }
    {
        std::ofstream out(prefix + "_coherence.csv");
        if (!out) throw Error("cannot write '" + prefix + "_coherence.csv'");
        out << "phi,delta,calibrated,population\n";
        for (const auto& r : table.coherence) {
            out << detail::format_double(r.phi) << "," << detail::format_double(r.delta)
                << "," << (r.calibrated ? "true" : "false") << ","
                << population_name(r.population) << "\n";
        }
    }
    {
        std::ofstream out(prefix + "_aggregates.csv");
        if (!out) throw Error("cannot write '" + prefix + "_aggregates.csv'");
        out << "phi,method,calibrated,mean_point,mean_abs_error,n_seeds\n";
        for (const auto& r : table.aggregates) {
            out << detail::format_double(r.phi) << "," << method_name(r.method) << ","
                << (r.calibrated ? "true" : "false") << ","
                << detail::format_double(r.mean_point) << ","
                << (r.mean_abs_error ? detail::format_double(*r.mean_abs_error)
                                     : std::string())
                << "," << r.seeds << "\n";
        }
    }
    {
        std::ofstream out(prefix + "_errors.csv");
        if (!out) throw Error("cannot write '" + prefix + "_errors.csv'");
        out << "phi,seed,step,message\n";
        for (const auto& r : table.errors) {
            out << detail::format_double(r.phi) << "," << r.seed << ","
                << detail::sanitize_csv_field(r.step) << ","
                << detail::sanitize_csv_field(r.message) << "\n";
        }
    }
}

// Single-run estimate rows: method,point,ci_low,ci_high,B,seed.
inline void write_run_estimates_csv(const RunResult& result, std::uint64_t seed,
                                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "method,point,ci_low,ci_high,B,seed\n";
    for (const auto& e : result.estimates) {
        out << method_name(e.method) << "," << detail::format_double(e.point) << ","
            << detail::format_double(e.ci_low) << "," << detail::format_double(e.ci_high)
            << "," << e.replicates << "," << seed << "\n";
    }
}

}  // namespace proxyshift
