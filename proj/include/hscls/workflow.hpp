#pragma once

// File-level operations shared by the CLI commands and the pipeline actions.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscls/abtest.hpp"
#include "hscls/corpus.hpp"
#include "hscls/eval.hpp"
#include "hscls/fs.hpp"
#include "hscls/models.hpp"

namespace hscls {

/// Hex FNV-1a of the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

/// Adds tool_version and config_hash fields to an artifact.
nlohmann::json stamp(nlohmann::json artifact, const std::string& cfg_hash);

struct PrepOptions {
    int min_assurance = 3;
    double test_fraction = 0.05;
    std::optional<UpsampleStrategy> upsample = UpsampleStrategy::mean;
    double minority_threshold = 0.01;
    std::size_t vocab_size = 20000;
    std::uint64_t seed = 0;
};

struct PrepResult {
    Dataset train;
    Dataset test;
    Vocabulary vocab;
    nlohmann::json report;  // per-class counts at every stage
};

/// filter -> split -> optional upsample (training side only) -> vocabulary
/// built from the training texts.
PrepResult prepare_corpus(const Dataset& raw, const PrepOptions& options);

/// Writes train.csv, test.csv, vocab.tsv and prep_report.json into `dir`.
void write_prepared(const PrepResult& prep, const fs::path& dir, const std::string& cfg_hash);

/// Preset name or JSON config file; the file wins when both are given.
ModelConfig resolve_model_config(Architecture arch, const std::optional<std::string>& preset,
                                 const std::optional<fs::path>& config_file);

std::string describe_config(const ModelConfig& cfg);

struct TrainJob {
    ModelConfig config;
    std::size_t max_len = 32;
    TrainConfig train;
    /// Share of each class held out for early stopping (0 disables it; classes
    /// with fewer than two records also disable it).
    double valid_fraction = 0.1;
};

TrainResult train_on_dataset(const Dataset& train_set, const Vocabulary& vocab, const TrainJob& job,
                             const std::string& cfg_hash);

std::string training_history_csv(std::span<const EpochStats> history);

struct EvaluationOutcome {
    EvalReport report;
    std::size_t skipped_unknown_class = 0;  // records whose class the model never saw
};

EvaluationOutcome evaluate_weights(const ModelWeights& weights, const Vocabulary& vocab, const Dataset& data,
                                   double beta = kDefaultBeta);

std::vector<TokenSequence> encode_inference(std::span<const InferenceRecord> records, const Vocabulary& vocab,
                                            std::size_t max_len);

inline constexpr const char* kPredictionsHeader =
    "record_id,predicted_hs_code,confidence,band,top3_codes,top3_probs";

/// Probabilities printed with %.6f; top-3 lists joined with '|'.
std::string predictions_csv(std::span<const InferenceRecord> records, std::span<const Prediction> preds,
                            std::span<const std::string> class_list);

struct AbOptions {
    std::size_t k = kDefaultFolds;
    std::uint64_t seed = 0;
    std::size_t max_len = 32;
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    Metric metric = Metric::f_beta;
    Statistic statistic = Statistic::mean;
    double alpha = 0.05;
    double beta = kDefaultBeta;
    std::size_t threads = 1;
};

/// k-fold CV of every named model on `data`, then aggregate, ANOVA and
/// recommend. Models that fail every fold are dropped and listed.
struct AbOutcome {
    AbTestReport report;
    std::vector<std::string> excluded_models;
};

AbOutcome run_abtest(const Dataset& data, const Vocabulary& vocab,
                     const std::vector<std::pair<std::string, ModelConfig>>& models, const AbOptions& options);

}  // namespace hscls
