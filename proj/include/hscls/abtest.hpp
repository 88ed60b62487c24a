#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscls/corpus.hpp"
#include "hscls/models.hpp"

namespace hscls {

inline constexpr std::size_t kDefaultFolds = 37;

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold_of;              // per item
    std::vector<std::vector<std::size_t>> folds;   // item indices, ascending
    std::vector<std::int32_t> small_classes;       // classes with fewer than k items
};

/// Stratified k-fold: each class's items are shuffled with the seed and dealt
/// round-robin, continuing from where the previous class stopped, so per-class
/// fold sizes differ by at most one and overall sizes stay balanced.
FoldAssignment k_fold_split(std::span<const std::int32_t> labels, std::size_t k, std::uint64_t seed);
/// Labels are positions in data.classes().
FoldAssignment k_fold_split(const Dataset& data, std::size_t k, std::uint64_t seed);

struct FoldResult {
    std::string model;
    std::size_t fold = 0;
    std::vector<double> precision;  // per class
    std::vector<double> recall;
    std::vector<bool> present;      // class had test items in this fold
    bool failed = false;
    std::string error;
};

/// Trains on `train` and returns predicted class ids for `test`.
using FoldPredictor = std::function<std::vector<std::int32_t>(
    std::span<const TokenSequence> train, std::span<const TokenSequence> test, std::size_t fold)>;

/// Fresh model per fold, seeded with derive_seed(train.seed, fold), trained
/// without a validation split for train.epochs epochs.
FoldPredictor model_fold_predictor(ModelConfig config, ModelDims dims, TrainConfig train);

/// One FoldResult per fold. Folds run on up to `threads` workers; a throwing
/// fold is recorded as failed and the rest continue.
std::vector<FoldResult> run_cv(const std::string& model, const FoldPredictor& predictor,
                               std::span<const TokenSequence> data, std::size_t n_classes,
                               const FoldAssignment& folds, std::size_t threads = 1);

enum class Metric { precision, recall, f_beta };
enum class Statistic { mean, median };

std::string to_string(Metric m);
std::string to_string(Statistic s);
Metric parse_metric(std::string_view s);
Statistic parse_statistic(std::string_view s);

/// Per (model, class, metric) samples over the folds where the class was
/// present, with mean and median aggregates. f_beta samples are computed per
/// fold from that fold's precision and recall.
class MetricTable {
public:
    MetricTable(std::vector<std::string> models, std::size_t n_classes, double beta);

    const std::vector<std::string>& models() const { return models_; }
    std::size_t n_classes() const { return n_classes_; }
    double beta() const { return beta_; }

    std::vector<double>& samples(std::size_t model, std::size_t cls, Metric m);
    const std::vector<double>& samples(std::size_t model, std::size_t cls, Metric m) const;
    /// NaN when the class never appeared in a successful fold.
    double value(std::size_t model, std::size_t cls, Metric m, Statistic s) const;
    std::size_t fold_count(std::size_t model, std::size_t cls) const { return samples(model, cls, Metric::precision).size(); }

private:
    std::vector<std::string> models_;
    std::size_t n_classes_;
    double beta_;
    std::vector<std::array<std::vector<double>, 3>> cells_;  // model-major
};

/// Groups fold results by model name (in order of first appearance).
MetricTable aggregate(std::span<const FoldResult> folds, std::size_t n_classes, double beta = 1.2);

inline constexpr double kLogitEpsilon = 1e-6;

/// Clamp to [eps, 1 - eps], then ln(x / (1 - x)).
std::vector<double> gaussian_transform(std::span<const double> samples, double eps = kLogitEpsilon);

struct AnovaResult {
    std::int32_t class_id = -1;
    Metric metric = Metric::precision;
    double f_statistic = 0.0;  // +inf when within-group variance is zero and between is not
    double p_value = 1.0;
    std::vector<std::size_t> group_sizes;
    bool tested = true;        // false when some group had fewer than two samples
};

/// One-way ANOVA; needs at least two groups of at least two samples each.
AnovaResult one_way_anova(std::span<const std::vector<double>> groups);

/// Per class: gaussian_transform each model's samples, then one_way_anova.
/// Classes where a model has fewer than two samples are reported untested
/// with p = 1.
std::vector<AnovaResult> anova_by_class(const MetricTable& table, Metric metric);

struct Recommendation {
    std::int32_t class_id = -1;
    std::string winner;
    double value = 0.0;
    bool significant = false;
    double alpha = 0.05;
    double p_value = 1.0;
};

/// Winner = argmax of the aggregate; ties go to the higher aggregate recall,
/// then to the lexicographically smaller model name. significant = p < alpha.
std::vector<Recommendation> recommend(const MetricTable& table, std::span<const AnovaResult> anova, double alpha = 0.05,
                                      Statistic statistic = Statistic::mean, Metric metric = Metric::f_beta);

struct AbTestReport {
    MetricTable table{{}, 0, 1.2};
    std::vector<AnovaResult> anova_precision;
    std::vector<AnovaResult> anova_recall;
    std::vector<AnovaResult> anova_selected;
    std::vector<Recommendation> recommendations;
    Metric metric = Metric::f_beta;
    Statistic statistic = Statistic::mean;
    double alpha = 0.05;
    std::vector<std::string> class_names;
    std::vector<std::size_t> failed_folds_per_model;
};

AbTestReport build_report(std::span<const FoldResult> folds, std::vector<std::string> class_names, double alpha,
                          Statistic statistic, Metric metric, double beta = 1.2);

/// Model with the most class wins; ties go to the higher mean of the selected
/// aggregate over classes, then the smaller name.
std::string overall_winner(const AbTestReport& report);

std::string report_csv(const AbTestReport& report);
nlohmann::json verdict_json(const AbTestReport& report);

inline constexpr const char* kHypothesisNote =
    "null hypothesis: the per-class metric means of all models are equal; rejected when p < alpha";

}  // namespace hscls
