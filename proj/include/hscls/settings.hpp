#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hscls/fs.hpp"

namespace hscls {

/// Fully resolved run configuration. Every field has a default; the workspace
/// file, environment and flags override it in that order.
struct Settings {
    std::uint64_t seed = 0;
    std::size_t max_len = 32;
    std::size_t vocab_size = 20000;
    int min_assurance = 3;
    double test_fraction = 0.05;
    std::string upsample = "mean";  // off | mean | median
    double minority_threshold = 0.01;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    double valid_fraction = 0.1;
    std::string models = "dnn,text_cnn";
    std::string dnn_preset = "paper_base";
    std::string text_cnn_preset = "prose_345";
    bool tune = false;
    std::size_t tune_budget = 10;
    std::size_t tune_n_init = 4;
    std::size_t tune_epochs = 3;
    std::size_t ab_k = 37;
    std::size_t ab_epochs = 5;
    std::string ab_metric = "f_beta";
    std::string ab_statistic = "mean";
    double alpha = 0.05;
    double beta = 1.2;
    double band_medium = 0.80;
    double band_high = 0.90;
    double drift_threshold = 0.1;
    bool drift_retrain = false;
    double poll_seconds = 1.0;
    std::size_t max_attempts = 3;
    double backoff_seconds = 2.0;
    std::size_t threads = 1;
};

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; '#' starts a comment, surrounding quotes are dropped.
KeyValues parse_key_values(std::string_view text);

/// Applies overrides onto `s`; unknown keys and unparsable values throw
/// std::invalid_argument naming the source.
void apply(Settings& s, const KeyValues& values, std::string_view source);

/// HSCLS_SEED and any HSCLS_<KEY> variable naming a settings key.
KeyValues settings_from_environment();

/// Flat JSON object (as written by to_json, or event options) as overrides.
KeyValues key_values_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Settings& s);
std::string settings_hash(const Settings& s);

}  // namespace hscls
