#include "hscls/settings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <stdexcept>

#include "hscls/checksum.hpp"

extern char** environ;

namespace hscls {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::invalid_argument("setting " + key + ": cannot parse '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("setting " + key + ": expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(Settings&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto u64 = [](std::uint64_t Settings::*f) {
            return [f](Settings& s, const std::string& k, const std::string& v) { s.*f = parse_number<std::uint64_t>(k, v); };
        };
        auto sz = [](std::size_t Settings::*f) {
            return [f](Settings& s, const std::string& k, const std::string& v) { s.*f = parse_number<std::size_t>(k, v); };
        };
        auto dbl = [](double Settings::*f) {
            return [f](Settings& s, const std::string& k, const std::string& v) { s.*f = parse_number<double>(k, v); };
        };
        auto str = [](std::string Settings::*f) {
            return [f](Settings& s, const std::string&, const std::string& v) { s.*f = v; };
        };
        auto boolean = [](bool Settings::*f) {
            return [f](Settings& s, const std::string& k, const std::string& v) { s.*f = parse_bool(k, v); };
        };
        t["seed"] = u64(&Settings::seed);
        t["max_len"] = sz(&Settings::max_len);
        t["vocab_size"] = sz(&Settings::vocab_size);
        t["min_assurance"] = [](Settings& s, const std::string& k, const std::string& v) { s.min_assurance = parse_number<int>(k, v); };
        t["test_fraction"] = dbl(&Settings::test_fraction);
        t["upsample"] = str(&Settings::upsample);
        t["minority_threshold"] = dbl(&Settings::minority_threshold);
        t["epochs"] = sz(&Settings::epochs);
        t["batch_size"] = sz(&Settings::batch_size);
        t["patience"] = sz(&Settings::patience);
        t["valid_fraction"] = dbl(&Settings::valid_fraction);
        t["models"] = str(&Settings::models);
        t["dnn_preset"] = str(&Settings::dnn_preset);
        t["text_cnn_preset"] = str(&Settings::text_cnn_preset);
        t["tune"] = boolean(&Settings::tune);
        t["tune_budget"] = sz(&Settings::tune_budget);
        t["tune_n_init"] = sz(&Settings::tune_n_init);
        t["tune_epochs"] = sz(&Settings::tune_epochs);
        t["ab_k"] = sz(&Settings::ab_k);
        t["ab_epochs"] = sz(&Settings::ab_epochs);
        t["ab_metric"] = str(&Settings::ab_metric);
        t["ab_statistic"] = str(&Settings::ab_statistic);
        t["alpha"] = dbl(&Settings::alpha);
        t["beta"] = dbl(&Settings::beta);
        t["band_medium"] = dbl(&Settings::band_medium);
        t["band_high"] = dbl(&Settings::band_high);
        t["drift_threshold"] = dbl(&Settings::drift_threshold);
        t["drift_retrain"] = boolean(&Settings::drift_retrain);
        t["poll_seconds"] = dbl(&Settings::poll_seconds);
        t["max_attempts"] = sz(&Settings::max_attempts);
        t["backoff_seconds"] = dbl(&Settings::backoff_seconds);
        t["threads"] = sz(&Settings::threads);
        return t;
    }();
    return table;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string t = trim(line);
        if (t.empty() || t.front() == '[') continue;  // blank line or table header
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
            value = value.substr(1, value.size() - 2);
        }
        out[key] = value;
    }
    return out;
}

void apply(Settings& s, const KeyValues& values, std::string_view source) {
    for (const auto& [k, v] : values) {
        auto it = setters().find(k);
        if (it == setters().end()) {
            throw std::invalid_argument(std::string(source) + ": unknown setting '" + k + "'");
        }
        try {
            it->second(s, k, v);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(std::string(source) + ": " + e.what());
        }
    }
}

KeyValues settings_from_environment() {
    KeyValues out;
    for (char** e = environ; e && *e; ++e) {
        std::string_view entry(*e);
        if (!entry.starts_with("HSCLS_")) continue;
        const auto eq = entry.find('=');
        if (eq == std::string_view::npos) continue;
        std::string key(entry.substr(6, eq - 6));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        if (setters().contains(key)) out[key] = std::string(entry.substr(eq + 1));
    }
    return out;
}

KeyValues key_values_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("settings overrides must be a JSON object");
    KeyValues out;
    for (const auto& [k, v] : j.items()) {
        if (v.is_string()) {
            out[k] = v.get<std::string>();
        } else if (v.is_boolean() || v.is_number()) {
            out[k] = v.dump();
        } else {
            throw std::invalid_argument("setting " + k + ": expected a scalar value");
        }
    }
    return out;
}

nlohmann::json to_json(const Settings& s) {
    return {{"seed", s.seed},
            {"max_len", s.max_len},
            {"vocab_size", s.vocab_size},
            {"min_assurance", s.min_assurance},
            {"test_fraction", s.test_fraction},
            {"upsample", s.upsample},
            {"minority_threshold", s.minority_threshold},
            {"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"patience", s.patience},
            {"valid_fraction", s.valid_fraction},
            {"models", s.models},
            {"dnn_preset", s.dnn_preset},
            {"text_cnn_preset", s.text_cnn_preset},
            {"tune", s.tune},
            {"tune_budget", s.tune_budget},
            {"tune_n_init", s.tune_n_init},
            {"tune_epochs", s.tune_epochs},
            {"ab_k", s.ab_k},
            {"ab_epochs", s.ab_epochs},
            {"ab_metric", s.ab_metric},
            {"ab_statistic", s.ab_statistic},
            {"alpha", s.alpha},
            {"beta", s.beta},
            {"band_medium", s.band_medium},
            {"band_high", s.band_high},
            {"drift_threshold", s.drift_threshold},
            {"drift_retrain", s.drift_retrain},
            {"poll_seconds", s.poll_seconds},
            {"max_attempts", s.max_attempts},
            {"backoff_seconds", s.backoff_seconds},
            {"threads", s.threads}};
}

std::string settings_hash(const Settings& s) { return to_hex(fnv1a64(to_json(s).dump())); }

}  // namespace hscls
