#include "hscls/abtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "hscls/csv.hpp"
#include "hscls/eval.hpp"
#include "hscls/rng.hpp"
#include "hscls/stats.hpp"

namespace hscls {

FoldAssignment k_fold_split(std::span<const std::int32_t> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("k_fold_split: k must be at least 2");
    std::map<std::int32_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    FoldAssignment a;
    a.k = k;
    a.fold_of.assign(labels.size(), 0);
    a.folds.resize(k);
    std::size_t offset = 0;
    for (auto& [cls, items] : by_class) {
        Rng rng(derive_seed(derive_seed(seed, "k_fold_split"), static_cast<std::uint64_t>(cls)));
        rng.shuffle(items);
        if (items.size() < k) a.small_classes.push_back(cls);
        for (std::size_t j = 0; j < items.size(); ++j) a.fold_of[items[j]] = (offset + j) % k;
        offset = (offset + items.size()) % k;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) a.folds[a.fold_of[i]].push_back(i);
    return a;
}

FoldAssignment k_fold_split(const Dataset& data, std::size_t k, std::uint64_t seed) {
    const auto classes = data.classes();
    std::vector<std::int32_t> labels(data.size());
    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (auto i : data.class_index().at(classes[c])) labels[i] = static_cast<std::int32_t>(c);
    }
    return k_fold_split(labels, k, seed);
}

FoldPredictor model_fold_predictor(ModelConfig config, ModelDims dims, TrainConfig train_cfg) {
    return [config = std::move(config), dims, train_cfg](std::span<const TokenSequence> train_set,
                                                         std::span<const TokenSequence> test_set, std::size_t fold) {
        TrainConfig tc = train_cfg;
        tc.seed = derive_seed(train_cfg.seed, fold);
        auto model = build_model(config, dims, tc.seed);
        auto result = train(*model, train_set, {}, tc, {});
        std::vector<std::int32_t> preds;
        preds.reserve(test_set.size());
        for (const auto& p : predict(result.weights, test_set, result.weights.vocab_hash)) preds.push_back(p.label_id);
        return preds;
    };
}

std::vector<FoldResult> run_cv(const std::string& model, const FoldPredictor& predictor,
                               std::span<const TokenSequence> data, std::size_t n_classes,
                               const FoldAssignment& folds, std::size_t threads) {
    if (folds.fold_of.size() != data.size()) {
        throw std::invalid_argument("run_cv: fold assignment covers " + std::to_string(folds.fold_of.size()) +
                                    " items, data has " + std::to_string(data.size()));
    }
    std::vector<FoldResult> results(folds.k);
    auto run_fold = [&](std::size_t f) {
        FoldResult& r = results[f];
        r.model = model;
        r.fold = f;
        try {
            std::vector<TokenSequence> train_set, test_set;
            for (std::size_t i = 0; i < data.size(); ++i) {
                (folds.fold_of[i] == f ? test_set : train_set).push_back(data[i]);
            }
            if (test_set.empty()) throw std::runtime_error("fold has no test items");
            const auto preds = predictor(train_set, test_set, f);
            std::vector<std::int32_t> labels;
            for (const auto& s : test_set) labels.push_back(s.label_id);
            const auto metrics = precision_recall(confusion_matrix(preds, labels, n_classes));
            for (const auto& m : metrics.classes) {
                r.precision.push_back(m.precision);
                r.recall.push_back(m.recall);
                r.present.push_back(m.support > 0);
            }
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
            r.precision.clear();
            r.recall.clear();
            r.present.clear();
        }
    };

    threads = std::clamp<std::size_t>(threads, 1, folds.k);
    if (threads == 1) {
        for (std::size_t f = 0; f < folds.k; ++f) run_fold(f);
        return results;
    }
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
        workers.emplace_back([&, t] {
            for (std::size_t f = t; f < folds.k; f += threads) run_fold(f);
        });
    }
    for (auto& w : workers) w.join();
    return results;
}

std::string to_string(Metric m) {
    switch (m) {
        case Metric::precision: return "precision";
        case Metric::recall: return "recall";
        default: return "f_beta";
    }
}

std::string to_string(Statistic s) { return s == Statistic::mean ? "mean" : "median"; }

Metric parse_metric(std::string_view s) {
    if (s == "precision") return Metric::precision;
    if (s == "recall") return Metric::recall;
    if (s == "f_beta") return Metric::f_beta;
    throw std::invalid_argument("unknown metric '" + std::string(s) + "' (expected precision, recall or f_beta)");
}

Statistic parse_statistic(std::string_view s) {
    if (s == "mean") return Statistic::mean;
    if (s == "median") return Statistic::median;
    throw std::invalid_argument("unknown statistic '" + std::string(s) + "' (expected mean or median)");
}

MetricTable::MetricTable(std::vector<std::string> models, std::size_t n_classes, double beta)
    : models_(std::move(models)), n_classes_(n_classes), beta_(beta), cells_(models_.size() * n_classes) {}

std::vector<double>& MetricTable::samples(std::size_t model, std::size_t cls, Metric m) {
    return cells_.at(model * n_classes_ + cls)[static_cast<std::size_t>(m)];
}

const std::vector<double>& MetricTable::samples(std::size_t model, std::size_t cls, Metric m) const {
    return cells_.at(model * n_classes_ + cls)[static_cast<std::size_t>(m)];
}

double MetricTable::value(std::size_t model, std::size_t cls, Metric m, Statistic s) const {
    const auto& xs = samples(model, cls, m);
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return s == Statistic::mean ? mean(xs) : median(xs);
}

MetricTable aggregate(std::span<const FoldResult> folds, std::size_t n_classes, double beta) {
    std::vector<std::string> models;
    for (const auto& f : folds) {
        if (std::find(models.begin(), models.end(), f.model) == models.end()) models.push_back(f.model);
    }
    MetricTable t(models, n_classes, beta);
    for (const auto& f : folds) {
        if (f.failed) continue;
        const auto m = static_cast<std::size_t>(std::find(models.begin(), models.end(), f.model) - models.begin());
        for (std::size_t c = 0; c < n_classes && c < f.present.size(); ++c) {
            if (!f.present[c]) continue;
            t.samples(m, c, Metric::precision).push_back(f.precision[c]);
            t.samples(m, c, Metric::recall).push_back(f.recall[c]);
            t.samples(m, c, Metric::f_beta).push_back(f_beta(f.precision[c], f.recall[c], beta));
        }
    }
    return t;
}

std::vector<double> gaussian_transform(std::span<const double> samples, double eps) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (double x : samples) {
        const double c = std::clamp(x, eps, 1.0 - eps);
        out.push_back(std::log(c / (1.0 - c)));
    }
    return out;
}

AnovaResult one_way_anova(std::span<const std::vector<double>> groups) {
    if (groups.size() < 2) throw std::invalid_argument("one_way_anova: at least two groups are required");
    AnovaResult r;
    std::size_t n = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw std::invalid_argument("one_way_anova: every group needs at least two samples");
        r.group_sizes.push_back(g.size());
        n += g.size();
        for (double x : g) grand += x;
    }
    grand /= static_cast<double>(n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) ssw += (x - m) * (x - m);
    }
    const double df1 = static_cast<double>(groups.size() - 1);
    const double df2 = static_cast<double>(n - groups.size());
    // Sums of squares below this scale are rounding noise from the means.
    double scale = 0.0;
    for (const auto& g : groups) {
        for (double x : g) scale = std::max(scale, std::fabs(x));
    }
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale * scale * static_cast<double>(n);
    if (ssw <= noise) {
        if (ssb <= noise) {
            r.f_statistic = 0.0;
            r.p_value = 1.0;
        } else {
            r.f_statistic = std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
        return r;
    }
    r.f_statistic = (ssb / df1) / (ssw / df2);
    r.p_value = f_survival(r.f_statistic, df1, df2);
    return r;
}

std::vector<AnovaResult> anova_by_class(const MetricTable& table, Metric metric) {
    std::vector<AnovaResult> out;
    for (std::size_t c = 0; c < table.n_classes(); ++c) {
        std::vector<std::vector<double>> groups;
        bool enough = table.models().size() >= 2;
        for (std::size_t m = 0; m < table.models().size(); ++m) {
            const auto& xs = table.samples(m, c, metric);
            enough = enough && xs.size() >= 2;
            groups.push_back(gaussian_transform(xs));
        }
        AnovaResult r;
        if (enough) {
            r = one_way_anova(groups);
        } else {
            r.tested = false;
            for (const auto& g : groups) r.group_sizes.push_back(g.size());
        }
        r.class_id = static_cast<std::int32_t>(c);
        r.metric = metric;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Recommendation> recommend(const MetricTable& table, std::span<const AnovaResult> anova, double alpha,
                                      Statistic statistic, Metric metric) {
    if (anova.size() != table.n_classes()) {
        throw std::invalid_argument("recommend: ANOVA results cover " + std::to_string(anova.size()) +
                                    " classes, table has " + std::to_string(table.n_classes()));
    }
    if (table.models().empty()) throw std::invalid_argument("recommend: no models to compare");
    std::vector<Recommendation> out;
    for (std::size_t c = 0; c < table.n_classes(); ++c) {
        std::size_t best = 0;
        auto key = [&](std::size_t m) {
            double v = table.value(m, c, metric, statistic);
            double r = table.value(m, c, Metric::recall, statistic);
            // A model with no samples for the class never wins against one with samples.
            if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
            if (std::isnan(r)) r = -std::numeric_limits<double>::infinity();
            return std::pair{v, r};
        };
        for (std::size_t m = 1; m < table.models().size(); ++m) {
            const auto a = key(m), b = key(best);
            if (a > b || (a == b && table.models()[m] < table.models()[best])) best = m;
        }
        Recommendation r;
        r.class_id = static_cast<std::int32_t>(c);
        r.winner = table.models()[best];
        r.value = table.value(best, c, metric, statistic);
        r.alpha = alpha;
        r.p_value = anova[c].p_value;
        r.significant = anova[c].tested && anova[c].p_value < alpha;
        out.push_back(std::move(r));
    }
    return out;
}

AbTestReport build_report(std::span<const FoldResult> folds, std::vector<std::string> class_names, double alpha,
                          Statistic statistic, Metric metric, double beta) {
    AbTestReport r;
    r.table = aggregate(folds, class_names.size(), beta);
    r.anova_precision = anova_by_class(r.table, Metric::precision);
    r.anova_recall = anova_by_class(r.table, Metric::recall);
    r.anova_selected = metric == Metric::precision ? r.anova_precision
                       : metric == Metric::recall  ? r.anova_recall
                                                   : anova_by_class(r.table, Metric::f_beta);
    r.recommendations = recommend(r.table, r.anova_selected, alpha, statistic, metric);
    r.metric = metric;
    r.statistic = statistic;
    r.alpha = alpha;
    r.class_names = std::move(class_names);
    r.failed_folds_per_model.assign(r.table.models().size(), 0);
    for (const auto& f : folds) {
        if (!f.failed) continue;
        const auto& ms = r.table.models();
        ++r.failed_folds_per_model[static_cast<std::size_t>(std::find(ms.begin(), ms.end(), f.model) - ms.begin())];
    }
    return r;
}

std::string overall_winner(const AbTestReport& report) {
    const auto& models = report.table.models();
    if (models.empty()) return {};
    std::vector<std::size_t> wins(models.size(), 0);
    for (const auto& rec : report.recommendations) {
        ++wins[static_cast<std::size_t>(std::find(models.begin(), models.end(), rec.winner) - models.begin())];
    }
    std::vector<double> avg(models.size(), 0.0);
    for (std::size_t m = 0; m < models.size(); ++m) {
        std::size_t n = 0;
        for (std::size_t c = 0; c < report.table.n_classes(); ++c) {
            const double v = report.table.value(m, c, report.metric, report.statistic);
            if (!std::isnan(v)) {
                avg[m] += v;
                ++n;
            }
        }
        avg[m] = n ? avg[m] / static_cast<double>(n) : -1.0;
    }
    std::size_t best = 0;
    for (std::size_t m = 1; m < models.size(); ++m) {
        const auto a = std::pair{wins[m], avg[m]}, b = std::pair{wins[best], avg[best]};
        if (a > b || (a == b && models[m] < models[best])) best = m;
    }
    return models[best];
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

const std::vector<AnovaResult>& anova_for(const AbTestReport& r, Metric m) {
    if (m == Metric::precision) return r.anova_precision;
    if (m == Metric::recall) return r.anova_recall;
    return r.anova_selected;
}

}  // namespace

std::string report_csv(const AbTestReport& r) {
    const auto& models = r.table.models();
    std::vector<std::string> header{"class", "metric"};
    for (const auto& m : models) {
        header.push_back(m + "_mean");
        header.push_back(m + "_median");
        header.push_back(m + "_folds");
    }
    for (const char* h : {"F", "p", "winner", "significant"}) header.emplace_back(h);
    std::string out = csv_line(header);

    std::vector<Metric> metrics{Metric::precision, Metric::recall};
    if (r.metric == Metric::f_beta) metrics.push_back(Metric::f_beta);
    for (std::size_t c = 0; c < r.table.n_classes(); ++c) {
        for (Metric metric : metrics) {
            const auto& a = anova_for(r, metric)[c];
            std::vector<std::string> row{r.class_names.at(c), to_string(metric)};
            for (std::size_t m = 0; m < models.size(); ++m) {
                row.push_back(num(r.table.value(m, c, metric, Statistic::mean)));
                row.push_back(num(r.table.value(m, c, metric, Statistic::median)));
                row.push_back(std::to_string(r.table.fold_count(m, c)));
            }
            std::string winner;
            if (metric == r.metric) {
                winner = r.recommendations[c].winner;
            } else {
                const auto recs = recommend(r.table, anova_for(r, metric), r.alpha, r.statistic, metric);
                winner = recs[c].winner;
            }
            row.push_back(a.tested ? num(a.f_statistic) : "");
            row.push_back(a.tested ? num(a.p_value) : "");
            row.push_back(winner);
            row.push_back(a.tested && a.p_value < r.alpha ? "1" : "0");
            out += csv_line(row);
        }
    }
    return out;
}

nlohmann::json verdict_json(const AbTestReport& r) {
    const auto& models = r.table.models();
    nlohmann::json classes = nlohmann::json::array();
    std::map<std::string, std::size_t> wins;
    for (const auto& m : models) wins[m] = 0;
    for (std::size_t c = 0; c < r.table.n_classes(); ++c) {
        const auto& rec = r.recommendations[c];
        ++wins[rec.winner];
        nlohmann::json aggregates = nlohmann::json::object();
        for (std::size_t m = 0; m < models.size(); ++m) {
            nlohmann::json cell = {{"folds", r.table.fold_count(m, c)}};
            for (Metric metric : {Metric::precision, Metric::recall, Metric::f_beta}) {
                for (Statistic s : {Statistic::mean, Statistic::median}) {
                    const double v = r.table.value(m, c, metric, s);
                    cell[to_string(metric) + "_" + to_string(s)] = std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
                }
            }
            aggregates[models[m]] = cell;
        }
        const auto& a = r.anova_selected[c];
        auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
        classes.push_back({{"class", r.class_names.at(c)},
                           {"winner", rec.winner},
                           {"value", finite_or_null(rec.value)},
                           {"significant", rec.significant},
                           {"tested", a.tested},
                           {"f_statistic", std::isinf(a.f_statistic) ? nlohmann::json("inf") : finite_or_null(a.f_statistic)},
                           {"p_value", a.p_value},
                           {"p_value_precision", r.anova_precision[c].p_value},
                           {"p_value_recall", r.anova_recall[c].p_value},
                           {"aggregates", aggregates}});
    }
    nlohmann::json failed = nlohmann::json::object();
    for (std::size_t m = 0; m < models.size(); ++m) failed[models[m]] = r.failed_folds_per_model[m];
    return {{"models", models},
            {"metric", to_string(r.metric)},
            {"statistic", to_string(r.statistic)},
            {"alpha", r.alpha},
            {"beta", r.table.beta()},
            {"hypothesis", kHypothesisNote},
            {"overall_winner", overall_winner(r)},
            {"wins", wins},
            {"failed_folds", failed},
            {"classes", classes}};
}

}  // namespace hscls
