#pragma once

#include <string>
#include <vector>

#include "hscls/models.hpp"
#include "hscls/tuner.hpp"
#include "hscls/pipeline/executor.hpp"
#include "hscls/workflow.hpp"

namespace hscls {

// Settings -> option structs, shared with the CLI.
PrepOptions prep_options(const Settings& s);
TrainConfig train_config(const Settings& s);
AbOptions ab_options(const Settings& s);
BandThresholds band_thresholds(const Settings& s);
/// Names from the comma-separated `models` key, in order, duplicates removed.
std::vector<std::string> candidate_models(const Settings& s);
/// Preset for `model` ("dnn" or "text_cnn") from dnn_preset / text_cnn_preset.
ModelConfig preset_for(const Settings& s, const std::string& model);

/// Bayesian search over the architecture's space. Each trial trains for
/// tune_epochs and scores the best validation accuracy.
TuneResult tune_model(const Dataset& train_set, const Vocabulary& vocab, Architecture arch, const Settings& s,
                      const std::string& cfg_hash, std::function<void(const Trial&)> on_trial = {});

/// Run-directory files the built-in actions read and write.
namespace run_files {
inline constexpr const char* input = "input.csv";
inline constexpr const char* preprocessed = "preprocessed.csv";
inline constexpr const char* model_dir = "model";
inline constexpr const char* raw_predictions = "work/predictions.csv";
inline constexpr const char* predictions = "predictions.csv";
inline constexpr const char* drift = "drift.json";
inline constexpr const char* prepared_dir = "prepared";
inline constexpr const char* snapshot = "snapshot.json";
inline constexpr const char* configs_dir = "configs";
inline constexpr const char* candidates_dir = "candidates";
inline constexpr const char* ab_report = "ab_report.csv";
inline constexpr const char* verdict = "verdict.json";
inline constexpr const char* registered = "registered.json";
inline constexpr const char* promotion = "promotion.json";
}  // namespace run_files

/// Actions for both default machines, keyed by the action ids they use.
///
/// Inference: validate_input copies the payload CSV into the run, preprocess
/// writes the normalized text, load_active_model pins the active registry
/// entry into the run (a resumed run keeps the pinned model even if the
/// registry moved on), predict scores, and write_results publishes
/// predictions.csv, then compares the input against the model's reference
/// distributions and, past drift_threshold, emits a drift alert into
/// events/retraining (drift_retrain) or events/alerts.
///
/// Retraining: the labeled corpus is the first .csv payload; a drift alert
/// without one retrains on the corpus of the active model's source run.
ActionTable builtin_actions();

}  // namespace hscls
