#pragma once

#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "hscls/corpus.hpp"

namespace hscls {

/// Raw counts keyed by label or token.
using Histogram = std::map<std::string, double>;

inline constexpr double kDriftEpsilon = 1e-9;
inline constexpr double kDefaultDriftThreshold = 0.1;

/// D(P || Q) in nats over the union of both supports. Each side is normalized,
/// eps is added to every cell and the result renormalized, so cells missing
/// on one side stay finite. Either histogram empty is rejected.
double smoothed_kl(const Histogram& p, const Histogram& q, double eps = kDriftEpsilon);

struct Distributions {
    Histogram classes;
    Histogram tokens;
};

Distributions distributions_of(const Dataset& data);
nlohmann::json to_json(const Distributions& d);
Distributions distributions_from_json(const nlohmann::json& j);

struct DriftReport {
    std::string reference_id;
    std::string live_id;
    std::map<std::string, double> divergences;  // "classes", "tokens"
    double threshold = kDefaultDriftThreshold;
    bool triggered = false;
};

/// KL(live || reference) for class labels and token unigrams; a feature whose
/// live histogram is empty is not scored. Throws if both live histograms are
/// empty.
DriftReport drift_check(const Distributions& reference, const Distributions& live, double threshold,
                        std::string reference_id = {}, std::string live_id = {});

nlohmann::json to_json(const DriftReport& r);

}  // namespace hscls
