#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hscls/models.hpp"

namespace hscls {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

    std::size_t n_classes() const { return n_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * n_ + pred]; }
    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * n_ + pred]; }
    std::uint64_t total() const;

    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::int32_t> preds, std::span<const std::int32_t> labels,
                                 std::size_t n_classes);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f_beta = 0.0;
    std::uint64_t support = 0;
    bool degenerate = false;  // a 0/0 precision or recall was reported as 0
};

struct PerClassMetrics {
    std::vector<ClassMetrics> classes;
    double beta = 1.2;
};

inline constexpr double kDefaultBeta = 1.2;

/// Precision, recall and F-beta per class. 0/0 cells are 0 and flagged.
PerClassMetrics precision_recall(const ConfusionMatrix& cm, double beta = kDefaultBeta);

/// (1 + b^2) p r / (b^2 p + r); 0 when p = r = 0.
double f_beta(double p, double r, double beta = kDefaultBeta);

double accuracy(const ConfusionMatrix& cm);

struct BandCounts {
    std::size_t high = 0;    // >= thresholds.high
    std::size_t medium = 0;  // [thresholds.medium, thresholds.high)
    std::size_t low = 0;

    bool operator==(const BandCounts&) const = default;
};

struct BandTable {
    BandCounts precision;
    BandCounts recall;
    BandCounts f_beta;
    BandThresholds thresholds;
};

BandTable band_table(const PerClassMetrics& m, const BandThresholds& thresholds = {});

std::string per_class_csv(const PerClassMetrics& m, std::span<const std::string> class_names);
/// Columns per band, labelled from the thresholds (">=90%", "80-90%", "<80%").
std::string band_table_csv(const BandTable& t);
/// "precision", "recall" or "f_beta".
const BandCounts& band_counts(const BandTable& t, std::string_view metric);
/// Bar chart of how many classes fall in each band for one metric.
std::string band_chart_svg(const BandCounts& counts, const BandThresholds& thresholds, std::string_view title);

struct EvalReport {
    ConfusionMatrix confusion{0};
    PerClassMetrics metrics;
    BandTable bands;
    double accuracy = 0.0;
    std::vector<std::string> class_names;
};

EvalReport evaluate_predictions(std::span<const std::int32_t> preds, std::span<const std::int32_t> labels,
                                std::vector<std::string> class_names, double beta = kDefaultBeta,
                                const BandThresholds& thresholds = {});

nlohmann::json to_json(const EvalReport& r);
/// Inverse of to_json; band counts are recomputed from the per-class metrics.
EvalReport eval_report_from_json(const nlohmann::json& j);

}  // namespace hscls
