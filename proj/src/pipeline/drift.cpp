#include "hscls/pipeline/drift.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "hscls/text.hpp"

namespace hscls {

double smoothed_kl(const Histogram& p, const Histogram& q, double eps) {
    double np = 0.0, nq = 0.0;
    for (const auto& [k, v] : p) {
        if (v < 0.0) throw std::invalid_argument("histogram counts must be non-negative");
        np += v;
    }
    for (const auto& [k, v] : q) {
        if (v < 0.0) throw std::invalid_argument("histogram counts must be non-negative");
        nq += v;
    }
    if (np <= 0.0) throw std::invalid_argument("smoothed_kl: empty live histogram");
    if (nq <= 0.0) throw std::invalid_argument("smoothed_kl: empty reference histogram");

    std::set<std::string> support;
    for (const auto& [k, v] : p) support.insert(k);
    for (const auto& [k, v] : q) support.insert(k);
    const double renorm = 1.0 + eps * static_cast<double>(support.size());
    double kl = 0.0;
    for (const auto& k : support) {
        auto ip = p.find(k);
        auto iq = q.find(k);
        const double pi = ((ip == p.end() ? 0.0 : ip->second / np) + eps) / renorm;
        const double qi = ((iq == q.end() ? 0.0 : iq->second / nq) + eps) / renorm;
        kl += pi * std::log(pi / qi);
    }
    return std::max(0.0, kl);
}

Distributions distributions_of(const Dataset& data) {
    Distributions d;
    for (const auto& r : data.records()) {
        d.classes[r.hs_code] += 1.0;
        for (const auto& t : split_whitespace(combined_text(r, default_stopwords()))) d.tokens[t] += 1.0;
    }
    return d;
}

nlohmann::json to_json(const Distributions& d) { return {{"classes", d.classes}, {"tokens", d.tokens}}; }

Distributions distributions_from_json(const nlohmann::json& j) {
    Distributions d;
    d.classes = j.at("classes").get<Histogram>();
    d.tokens = j.at("tokens").get<Histogram>();
    return d;
}

DriftReport drift_check(const Distributions& reference, const Distributions& live, double threshold,
                        std::string reference_id, std::string live_id) {
    auto total = [](const Histogram& h) {
        double s = 0.0;
        for (const auto& [k, v] : h) s += v;
        return s;
    };
    if (total(live.classes) <= 0.0 && total(live.tokens) <= 0.0) {
        throw std::invalid_argument("drift_check: the live window is empty");
    }
    DriftReport r;
    r.reference_id = std::move(reference_id);
    r.live_id = std::move(live_id);
    r.threshold = threshold;
    if (total(live.classes) > 0.0) r.divergences["classes"] = smoothed_kl(live.classes, reference.classes);
    if (total(live.tokens) > 0.0) r.divergences["tokens"] = smoothed_kl(live.tokens, reference.tokens);
    for (const auto& [k, v] : r.divergences) r.triggered = r.triggered || v > threshold;
    return r;
}

nlohmann::json to_json(const DriftReport& r) {
    return {{"reference_id", r.reference_id},
            {"live_id", r.live_id},
            {"divergences", r.divergences},
            {"threshold", r.threshold},
            {"triggered", r.triggered},
            {"measure", "KL(live || reference), nats, add-1e-9 smoothing"}};
}

}  // namespace hscls
