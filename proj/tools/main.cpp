// proxyshift CLI: sweep the synthetic designs over phi, induce missingness
// on a CSV, run the estimation pipeline on a dataset, or query the exact
// oracles (link solver, implied moments, grid MLE).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "proxyshift/csv.hpp"
#include "proxyshift/harness.hpp"

namespace {

using namespace proxyshift;

struct PipelineFlags {
    std::string model = "naive_bayes";
    bool no_calibrate = false;
    double split_fraction = 0.5;
    std::size_t bootstrap_b = 1000;
    std::optional<double> clip_quantile;
    std::string coherence_population = "pooled";
    double nb_alpha = 1.0;
    std::size_t cv_folds = 10;
};

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& flags) {
    cmd->add_option("--model", flags.model, "Prediction model for Y|X (naive_bayes|logistic)")
        ->check(CLI::IsMember({"naive_bayes", "logistic"}));
    cmd->add_flag("--no-calibrate", flags.no_calibrate,
                  "Skip Platt calibration (drops cipw/cdirect/cproxy)");
    cmd->add_option("--split-fraction", flags.split_fraction,
                    "Fraction of observed cases used for model fitting")
        ->check(CLI::Range(1e-6, 1.0 - 1e-6));
    cmd->add_option("--bootstrap-b", flags.bootstrap_b, "Bootstrap replicates per estimator");
    cmd->add_option("--clip-quantile", flags.clip_quantile,
                    "Truncate IPW weights above this empirical quantile");
    cmd->add_option("--coherence-population", flags.coherence_population,
                    "Units the coherence score averages over")
        ->check(CLI::IsMember({"pooled", "validation_observed", "validation_missing"}));
    cmd->add_option("--nb-alpha", flags.nb_alpha, "Naive Bayes pseudo-count");
    cmd->add_option("--cv-folds", flags.cv_folds, "Cross-validation folds");
}

PipelineOptions to_options(const PipelineFlags& flags, std::uint64_t seed) {
    PipelineOptions options;
    options.model_kind =
        flags.model == "logistic" ? ModelKind::logistic : ModelKind::naive_bayes;
    options.calibrate = !flags.no_calibrate;
    options.ipw_clip_quantile = flags.clip_quantile;
    options.bootstrap_B = flags.bootstrap_b;
    options.split_fraction = flags.split_fraction;
    options.seed = seed;
    if (flags.coherence_population == "validation_observed")
        options.coherence_population = Population::validation_observed;
    else if (flags.coherence_population == "validation_missing")
        options.coherence_population = Population::validation_missing;
    else
        options.coherence_population = Population::pooled;
    options.nb_alpha = flags.nb_alpha;
    options.cv_folds = flags.cv_folds;
    return options;
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, std::size_t count) {
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = base + i;
    return seeds;
}

std::vector<double> read_score_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);
    std::vector<double> scores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "score") continue;
        try {
            scores.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw ParseError("not a number: '" + line + "'", lineno);
        }
    }
    if (scores.empty()) throw ParseError("no scores in '" + path + "'", lineno);
    return scores;
}

int run_simulate(const std::string& family, std::size_t n,
                 const std::vector<double>& phi_grid, std::uint64_t seed,
                 std::size_t num_seeds, const PipelineFlags& flags,
                 const std::string& out_prefix) {
    const SimFamily fam = family == "highdim" ? SimFamily::highdim : SimFamily::toy;
    const auto table = run_phi_grid(fam, n, phi_grid, to_options(flags, seed),
                                    seed_range(seed, num_seeds));
    write_results(table, out_prefix);
    write_manifest(table.manifest, out_prefix + "_manifest.json");
    std::printf("wrote %s_{estimates,coherence,aggregates,errors}.csv (%zu estimate rows, %zu errors)\n",
                out_prefix.c_str(), table.estimates.size(), table.errors.size());
    return table.errors.empty() ? 0 : 2;
}

int run_induce(const std::string& input, double phi, double mu0, double mu1,
               std::uint64_t seed, const std::string& out, bool emit_oracle) {
    const auto loaded = load_csv(input);
    const auto induced = induce_missingness(loaded.dataset, {mu0, mu1}, phi, seed);
    write_dataset_csv(induced.draw.dataset, out,
                      emit_oracle ? &induced.draw.oracle_y : nullptr);
    std::printf("induced missingness: beta0=%.6f beta=%.6f p_m=%.6f mu0=%.6f mu1=%.6f\n",
                induced.beta0, induced.beta, induced.implied.p_m, induced.implied.mu0,
                induced.implied.mu1);
    std::printf("wrote %s (%zu units, %zu missing)\n", out.c_str(),
                induced.draw.dataset.size(), induced.draw.dataset.missing_count());
    return 0;
}

int run_estimate(const std::string& input, std::uint64_t seed, const PipelineFlags& flags,
                 const std::string& out, const std::string& manifest_path) {
    const auto loaded = load_csv(input);
    auto result = run_pipeline(loaded.dataset, to_options(flags, seed));

    if (loaded.oracle_y) {
        std::size_t n_mis = 0, ones = 0;
        for (std::size_t i = 0; i < loaded.dataset.size(); ++i) {
            if (loaded.dataset[i].observed()) continue;
            ++n_mis;
            ones += (*loaded.oracle_y)[i];
        }
        const double oracle = static_cast<double>(ones) / static_cast<double>(n_mis);
        result.manifest["oracle_missing_mean"] = oracle;
        std::printf("oracle missing-case mean: %.6f\n", oracle);
    }

    for (const auto& est : result.estimates)
        std::printf("%-8s %.6f  [%.6f, %.6f]  B=%zu\n", method_name(est.method),
                    est.point, est.ci_low, est.ci_high, est.replicates);
    std::printf("coherence (uncalibrated): %.6g\n", result.coherence_uncalibrated.delta);
    if (result.coherence_calibrated)
        std::printf("coherence (calibrated):   %.6g\n", result.coherence_calibrated->delta);

    if (!out.empty()) write_run_estimates_csv(result, seed, out);
    if (!manifest_path.empty()) write_manifest(result.manifest, manifest_path);
    return 0;
}

int run_oracle(const std::string& family, std::optional<double> phi,
               const std::string& scores_path, double source_prevalence,
               double resolution) {
    if (phi) {
        SimConfig config = family == "highdim" ? highdim_config(*phi) : toy_config(*phi);
        const auto implied = implied_moments(config);
        std::printf("family=%s phi=%.4f\n", family.c_str(), *phi);
        std::printf("solved links: beta0=%.8f beta=%.8f\n", config.beta0, config.beta);
        std::printf("implied moments: p_m=%.8f mu0=%.8f mu1=%.8f\n", implied.p_m,
                    implied.mu0, implied.mu1);
    }
    if (!scores_path.empty()) {
        const auto scores =
            ScoreSet::of(read_score_file(scores_path), Population::validation_missing);
        const double grid = grid_mle(scores, source_prevalence, resolution);
        const auto em = em_label_shift(scores, source_prevalence);
        std::printf("n=%zu p0=%.6f\n", scores.size(), source_prevalence);
        std::printf("grid_mle(resolution=%g): %.8f\n", resolution, grid);
        std::printf("em: pi=%.8f iterations=%zu converged=%s\n", em.pi_hat, em.iterations,
                    em.converged ? "true" : "false");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prevalence estimation for non-ignorable missing data via label shift"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Sweep a synthetic design over phi");
    std::string family = "toy";
    std::size_t n = 1000;
    std::vector<double> phi_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 0;
    std::size_t num_seeds = 1;
    std::string out_prefix = "proxyshift";
    PipelineFlags sim_flags;
    simulate->add_option("--family", family, "Synthetic design (toy|highdim)")
        ->check(CLI::IsMember({"toy", "highdim"}));
    simulate->add_option("--n", n, "Units per generated dataset");
    simulate->add_option("--phi-grid", phi_grid, "phi values to sweep")->delimiter(',');
    simulate->add_option("--seed", seed, "Base seed; seeds are seed..seed+num-seeds-1")
        ->required();
    simulate->add_option("--num-seeds", num_seeds, "Replications per phi");
    simulate->add_option("--out", out_prefix, "Output path prefix");
    add_pipeline_flags(simulate, sim_flags);

    // induce
    auto* induce = app.add_subcommand(
        "induce", "Apply the synthetic missingness mechanism to a fully observed CSV");
    std::string induce_input, induce_out = "induced.csv";
    double induce_phi = 1.0, mu0_target = 0.25, mu1_target = 0.5;
    std::uint64_t induce_seed = 0;
    bool emit_oracle = false;
    induce->add_option("--input", induce_input, "Base CSV (schema m,y,x0,...)")->required();
    induce->add_option("--phi", induce_phi, "Mechanism mixing parameter")
        ->check(CLI::Range(0.0, 1.0));
    induce->add_option("--mu0-target", mu0_target, "Target P(Y=1|M=0)");
    induce->add_option("--mu1-target", mu1_target, "Target P(Y=1|M=1)");
    induce->add_option("--seed", induce_seed, "Mechanism seed")->required();
    induce->add_option("--out", induce_out, "Output CSV path");
    induce->add_flag("--emit-oracle", emit_oracle,
                     "Append the sealed y_oracle column to the output");

    // estimate
    auto* estimate = app.add_subcommand("estimate", "Run the full pipeline on a CSV");
    std::string est_input, est_out, est_manifest;
    std::uint64_t est_seed = 0;
    PipelineFlags est_flags;
    estimate->add_option("--input", est_input, "Dataset CSV (schema m,y,x0,...)")
        ->required();
    estimate->add_option("--seed", est_seed, "Pipeline seed")->required();
    estimate->add_option("--out", est_out, "Estimates CSV (method,point,ci_low,ci_high,B,seed)");
    estimate->add_option("--manifest", est_manifest, "Run manifest JSON path");
    add_pipeline_flags(estimate, est_flags);

    // oracle
    auto* oracle = app.add_subcommand("oracle",
                                      "Exact solver/moment checks and grid-search MLE");
    std::string oracle_family = "toy", oracle_scores;
    std::optional<double> oracle_phi;
    double oracle_p0 = 0.5, oracle_resolution = 1e-6;
    oracle->add_option("--family", oracle_family, "Design for moment checks (toy|highdim)")
        ->check(CLI::IsMember({"toy", "highdim"}));
    oracle->add_option("--phi", oracle_phi, "Solve links and print implied moments");
    oracle->add_option("--scores", oracle_scores,
                       "Score file (one probability per line) for the grid MLE");
    oracle->add_option("--source-prevalence", oracle_p0, "p(y=1|m=0) for the grid MLE");
    oracle->add_option("--resolution", oracle_resolution, "Grid resolution");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed())
            return run_simulate(family, n, phi_grid, seed, num_seeds, sim_flags, out_prefix);
        if (induce->parsed())
            return run_induce(induce_input, induce_phi, mu0_target, mu1_target,
                              induce_seed, induce_out, emit_oracle);
        if (estimate->parsed())
            return run_estimate(est_input, est_seed, est_flags, est_out, est_manifest);
        if (oracle->parsed()) {
            if (!oracle_phi && oracle_scores.empty()) {
                std::cerr << "oracle: pass --phi and/or --scores\n";
                return 1;
            }
            return run_oracle(oracle_family, oracle_phi, oracle_scores, oracle_p0,
                              oracle_resolution);
        }
    } catch (const proxyshift::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
