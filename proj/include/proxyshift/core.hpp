#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxyshift/errors.hpp"
#include "proxyshift/numeric.hpp"
#include "proxyshift/rng.hpp"

namespace proxyshift {

// One study unit: binary covariates x, a missingness flag, and the binary
// outcome y which is present exactly when the outcome was observed (m = 0).
struct Unit {
    std::vector<std::uint8_t> x;
    std::uint8_t m = 0;                 // 1 = outcome missing
    std::optional<std::uint8_t> y;      // present iff m == 0

    bool observed() const { return m == 0; }
};

// Immutable collection of units sharing one covariate dimension.  Emptiness
// and the presence of both missingness patterns are checked at use sites,
// not construction, so intermediate slices (e.g. an all-observed training
// half) are representable.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::vector<Unit> units, std::size_t dim)
        : units_(std::move(units)), dim_(dim) {
        validate();
    }

    static Dataset from_units(std::vector<Unit> units) {
        if (units.empty())
            throw ArgumentError("cannot infer dimension from an empty dataset");
        const std::size_t dim = units.front().x.size();
        return Dataset(std::move(units), dim);
    }

    const std::vector<Unit>& units() const { return units_; }
    std::size_t size() const { return units_.size(); }
    std::size_t dim() const { return dim_; }
    bool empty() const { return units_.empty(); }
    const Unit& operator[](std::size_t i) const { return units_[i]; }

    std::size_t observed_count() const {
        std::size_t n = 0;
        for (const auto& u : units_) n += u.observed() ? 1 : 0;
        return n;
    }
    std::size_t missing_count() const { return size() - observed_count(); }

    double missing_fraction() const {
        if (empty()) throw InsufficientDataError("missing fraction of an empty dataset");
        return static_cast<double>(missing_count()) / static_cast<double>(size());
    }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        std::vector<Unit> picked;
        picked.reserve(idx.size());
        for (std::size_t i : idx) picked.push_back(units_[i]);
        return Dataset(std::move(picked), dim_);
    }

private:
    void validate() const {
        if (dim_ == 0 && !units_.empty())
            throw ArgumentError("covariate dimension must be >= 1");
        for (const auto& u : units_) {
            if (u.x.size() != dim_)
                throw ArgumentError("unit covariate length differs from dataset dimension");
            if (u.m != 0 && u.m != 1)
                throw ArgumentError("missingness flag must be 0 or 1");
            if (u.observed() != u.y.has_value())
                throw ArgumentError("outcome must be present exactly when m = 0");
            if (u.y && *u.y != 0 && *u.y != 1)
                throw ArgumentError("outcome must be 0 or 1");
            for (auto v : u.x)
                if (v != 0 && v != 1)
                    throw ArgumentError("covariates must be 0 or 1");
        }
    }

    std::vector<Unit> units_;
    std::size_t dim_ = 0;
};

// Deterministic split of a dataset: observed cases are divided into a model
// training half and a held-out calibration/estimation half; every missing
// case goes to validation_missing.  validation_observed may only be empty
// when no calibration step will consume it.
struct SplitDataset {
    Dataset train;                 // observed cases only
    Dataset validation_observed;   // observed cases held out
    Dataset validation_missing;    // all m = 1 cases
};

enum class Method {
    cc,
    ipw,
    cipw,
    direct,
    cdirect,
    proxy,
    cproxy,
    mom,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::cc: return "cc";
        case Method::ipw: return "ipw";
        case Method::cipw: return "cipw";
        case Method::direct: return "direct";
        case Method::cdirect: return "cdirect";
        case Method::proxy: return "proxy";
        case Method::cproxy: return "cproxy";
        case Method::mom: return "mom";
    }
    return "?";
}

inline bool method_is_calibrated(Method m) {
    return m == Method::cipw || m == Method::cdirect || m == Method::cproxy;
}

// Point estimate of the missing-case prevalence with a percentile bootstrap
// interval over `replicates` resamples.
struct Estimate {
    Method method = Method::cc;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t replicates = 0;
};

// Partitions the observed cases uniformly at random (Fisher-Yates under the
// given seed, prefix to train); missing cases all route to
// validation_missing.  The train share is round(fraction * n_observed),
// clamped so both observed parts stay non-empty.
inline SplitDataset split_data(const Dataset& dataset, double observed_fraction,
                               std::uint64_t seed) {
    if (!(observed_fraction > 0.0 && observed_fraction < 1.0))
        throw ArgumentError("observed_fraction must lie strictly inside (0,1)");

    std::vector<std::size_t> obs_idx, mis_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        (dataset[i].observed() ? obs_idx : mis_idx).push_back(i);
    if (obs_idx.size() < 2)
        throw InsufficientDataError("split requires at least 2 observed units");

    Rng rng(seed);
    fisher_yates(obs_idx, rng);

    const auto n_obs = obs_idx.size();
    auto n_train = static_cast<std::size_t>(
        std::lround(observed_fraction * static_cast<double>(n_obs)));
    n_train = std::clamp<std::size_t>(n_train, 1, n_obs - 1);

    std::vector<std::size_t> train_idx(obs_idx.begin(), obs_idx.begin() + n_train);
    std::vector<std::size_t> val_idx(obs_idx.begin() + n_train, obs_idx.end());

    return SplitDataset{dataset.subset(train_idx), dataset.subset(val_idx),
                        dataset.subset(mis_idx)};
}

// Sample mean of y over the observed cases.
inline double observed_prevalence(const Dataset& dataset) {
    std::size_t n = 0, ones = 0;
    for (const auto& u : dataset.units()) {
        if (!u.observed()) continue;
        ++n;
        ones += *u.y;
    }
    if (n == 0)
        throw InsufficientDataError("observed prevalence needs at least one observed unit");
    return static_cast<double>(ones) / static_cast<double>(n);
}

// E[Y] = (1 - P(M=1)) mu0 + P(M=1) mu1.
inline double overall_mean(double missing_rate, double mu0, double mu1) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(missing_rate) || !in_unit(mu0) || !in_unit(mu1))
        throw ArgumentError("overall_mean arguments must lie in [0,1]");
    return (1.0 - missing_rate) * mu0 + missing_rate * mu1;
}

}  // namespace proxyshift
