#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "proxyshift/calibrate.hpp"
#include "proxyshift/core.hpp"
#include "proxyshift/datagen.hpp"
#include "proxyshift/errors.hpp"
#include "proxyshift/models.hpp"

namespace proxyshift {

using Json = nlohmann::ordered_json;

inline Json to_json(const NaiveBayesModel& model) {
    Json j;
    j["kind"] = "naive_bayes";
    j["log_prior"] = model.log_prior;
    j["log_cond"] = model.log_cond;
    j["alpha"] = model.alpha;
    return j;
}

inline Json to_json(const LogisticModel& model) {
    Json j;
    j["kind"] = "logistic";
    j["weights"] = model.weights;
    j["intercept"] = model.intercept;
    j["lambda"] = model.l2;
    return j;
}

inline Json to_json(const PlattParams& params) {
    Json j;
    j["inv_temperature"] = params.inv_temperature;
    j["offset"] = params.offset;
    if (params.degenerate_labels) j["degenerate_labels"] = true;
    return j;
}

inline Json to_json(const CvReport& report) {
    Json j;
    j["grid"] = report.grid;
    j["mean_loss"] = report.mean_loss;
    j["chosen"] = report.chosen;
    return j;
}

inline Json to_json(const SimConfig& config) {
    Json j;
    j["mu_y"] = config.mu_y;
    j["cond"] = config.cond;
    j["phi"] = config.phi;
    j["beta0"] = config.beta0;
    j["beta"] = config.beta;
    j["n"] = config.n;
    j["seed"] = config.seed;
    return j;
}

inline SimConfig sim_config_from_json(const Json& j) {
    SimConfig config;
    try {
        config.mu_y = j.at("mu_y").get<double>();
        config.cond = j.at("cond").get<std::vector<std::array<double, 2>>>();
        config.phi = j.at("phi").get<double>();
        config.beta0 = j.at("beta0").get<double>();
        config.beta = j.at("beta").get<double>();
        config.n = j.at("n").get<std::size_t>();
        config.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad sim config document: ") + e.what());
    }
    config.validate();
    return config;
}

inline Json to_json(const Estimate& est) {
    Json j;
    j["method"] = method_name(est.method);
    j["point"] = est.point;
    j["ci_low"] = est.ci_low;
    j["ci_high"] = est.ci_high;
    j["B"] = est.replicates;
    return j;
}

inline void write_manifest(const Json& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << manifest.dump(2) << "\n";
}

}  // namespace proxyshift
