#include "hscls/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "hscls/csv.hpp"

namespace hscls {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

ConfusionMatrix confusion_matrix(std::span<const std::int32_t> preds, std::span<const std::int32_t> labels,
                                 std::size_t n_classes) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument("confusion_matrix: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(labels.size()) + " labels");
    }
    ConfusionMatrix cm(n_classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || labels[i] < 0 || static_cast<std::size_t>(preds[i]) >= n_classes ||
            static_cast<std::size_t>(labels[i]) >= n_classes) {
            throw std::invalid_argument("confusion_matrix: class id outside [0, " + std::to_string(n_classes) + ")");
        }
        ++cm.at(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(preds[i]));
    }
    return cm;
}

double f_beta(double p, double r, double beta) {
    if (beta < 0.0 || std::isnan(beta)) throw std::invalid_argument("f_beta: beta must be non-negative");
    if (p == 0.0 && r == 0.0) return 0.0;
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (b2 * p + r);
}

PerClassMetrics precision_recall(const ConfusionMatrix& cm, double beta) {
    const std::size_t C = cm.n_classes();
    PerClassMetrics out;
    out.beta = beta;
    out.classes.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        std::uint64_t predicted = 0, actual = 0;
        for (std::size_t k = 0; k < C; ++k) {
            predicted += cm.at(k, c);
            actual += cm.at(c, k);
        }
        const auto tp = static_cast<double>(cm.at(c, c));
        auto& m = out.classes[c];
        m.support = actual;
        m.precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
        m.recall = actual > 0 ? tp / static_cast<double>(actual) : 0.0;
        m.degenerate = predicted == 0 || actual == 0;
        m.f_beta = f_beta(m.precision, m.recall, beta);
    }
    return out;
}

double accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw std::invalid_argument("accuracy of an empty confusion matrix");
    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.n_classes(); ++c) trace += cm.at(c, c);
    return static_cast<double>(trace) / static_cast<double>(total);
}

namespace {

void count_band(BandCounts& b, double v, const BandThresholds& t) {
    switch (confidence_band(v, t)) {
        case ConfidenceBand::high: ++b.high; break;
        case ConfidenceBand::medium: ++b.medium; break;
        case ConfidenceBand::low: ++b.low; break;
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

BandTable band_table(const PerClassMetrics& m, const BandThresholds& thresholds) {
    BandTable t;
    t.thresholds = thresholds;
    for (const auto& c : m.classes) {
        count_band(t.precision, c.precision, thresholds);
        count_band(t.recall, c.recall, thresholds);
        count_band(t.f_beta, c.f_beta, thresholds);
    }
    return t;
}

std::string per_class_csv(const PerClassMetrics& m, std::span<const std::string> class_names) {
    std::string out = "class,precision,recall,f_beta,support,degenerate\n";
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        const auto& k = m.classes[c];
        const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        out += csv_line({name, fmt(k.precision), fmt(k.recall), fmt(k.f_beta), std::to_string(k.support),
                         k.degenerate ? "1" : "0"});
    }
    return out;
}

namespace {

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", v * 100.0);
    return buf;
}

// Column labels in Table IV style: ">=90%", "80-90%", "<80%".
std::array<std::string, 3> band_labels(const BandThresholds& t) {
    return {">=" + percent(t.high), percent(t.medium).substr(0, percent(t.medium).size() - 1) + "-" + percent(t.high),
            "<" + percent(t.medium)};
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (char ch : text) {
        if (ch == '<') out += "&lt;";
        else if (ch == '>') out += "&gt;";
        else if (ch == '&') out += "&amp;";
        else out += ch;
    }
    return out;
}

}  // namespace

std::string band_table_csv(const BandTable& t) {
    const auto labels = band_labels(t.thresholds);
    std::string out = csv_line({"metric", labels[0], labels[1], labels[2]});
    auto row = [&](const char* name, const BandCounts& b) {
        out += csv_line({name, std::to_string(b.high), std::to_string(b.medium), std::to_string(b.low)});
    };
    row("precision", t.precision);
    row("recall", t.recall);
    row("f_beta", t.f_beta);
    return out;
}

const BandCounts& band_counts(const BandTable& t, std::string_view metric) {
    if (metric == "precision") return t.precision;
    if (metric == "recall") return t.recall;
    if (metric == "f_beta") return t.f_beta;
    throw std::invalid_argument("unknown metric '" + std::string(metric) + "'");
}

std::string band_chart_svg(const BandCounts& counts, const BandThresholds& thresholds, std::string_view title) {
    const auto labels = band_labels(thresholds);
    const std::size_t vals[] = {counts.high, counts.medium, counts.low};
    const char* colors[] = {"#2b8a3e", "#e8a33d", "#c92a2a"};
    const std::size_t peak = std::max<std::size_t>({1, counts.high, counts.medium, counts.low});

    constexpr int kW = 360, kH = 300, kLeft = 40, kBottom = 40, kTop = 44;
    constexpr int kPlotH = kH - kBottom - kTop;
    constexpr int kSlot = (kW - kLeft - 20) / 3;
    constexpr int kBarW = 56;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
    s << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - 10 << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
    for (int b = 0; b < 3; ++b) {
        const int h = static_cast<int>(std::lround(static_cast<double>(vals[b]) * kPlotH / static_cast<double>(peak)));
        const int x = kLeft + b * kSlot + (kSlot - kBarW) / 2;
        const int y = kH - kBottom - h;
        s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kBarW << "\" height=\"" << h << "\" fill=\""
          << colors[b] << "\"><title>" << xml_escape(labels[b]) << ": " << vals[b] << " classes</title></rect>\n";
        s << "<text x=\"" << x + kBarW / 2 << "\" y=\"" << y - 4 << "\" text-anchor=\"middle\">" << vals[b]
          << "</text>\n";
        s << "<text x=\"" << x + kBarW / 2 << "\" y=\"" << kH - kBottom + 18 << "\" text-anchor=\"middle\">"
          << xml_escape(labels[b]) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

EvalReport evaluate_predictions(std::span<const std::int32_t> preds, std::span<const std::int32_t> labels,
                                std::vector<std::string> class_names, double beta, const BandThresholds& thresholds) {
    EvalReport r;
    r.confusion = confusion_matrix(preds, labels, class_names.size());
    r.metrics = precision_recall(r.confusion, beta);
    r.bands = band_table(r.metrics, thresholds);
    r.accuracy = accuracy(r.confusion);
    r.class_names = std::move(class_names);
    return r;
}

nlohmann::json to_json(const EvalReport& r) {
    auto bands = [](const BandCounts& b) { return nlohmann::json{{"high", b.high}, {"medium", b.medium}, {"low", b.low}}; };
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t c = 0; c < r.metrics.classes.size(); ++c) {
        const auto& k = r.metrics.classes[c];
        per_class.push_back({{"class", r.class_names.at(c)},
                             {"precision", k.precision},
                             {"recall", k.recall},
                             {"f_beta", k.f_beta},
                             {"support", k.support},
                             {"degenerate", k.degenerate}});
    }
    nlohmann::json cm = nlohmann::json::array();
    for (std::size_t t = 0; t < r.confusion.n_classes(); ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < r.confusion.n_classes(); ++p) row.push_back(r.confusion.at(t, p));
        cm.push_back(row);
    }
    return {{"accuracy", r.accuracy},
            {"beta", r.metrics.beta},
            {"thresholds", {{"medium", r.bands.thresholds.medium}, {"high", r.bands.thresholds.high}}},
            {"bands",
             {{"precision", bands(r.bands.precision)}, {"recall", bands(r.bands.recall)}, {"f_beta", bands(r.bands.f_beta)}}},
            {"per_class", per_class},
            {"confusion_matrix", cm}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.metrics.beta = j.at("beta").get<double>();
    const auto& th = j.at("thresholds");
    const BandThresholds thresholds{th.at("medium").get<double>(), th.at("high").get<double>()};
    for (const auto& c : j.at("per_class")) {
        ClassMetrics m;
        m.precision = c.at("precision").get<double>();
        m.recall = c.at("recall").get<double>();
        m.f_beta = c.at("f_beta").get<double>();
        m.support = c.at("support").get<std::size_t>();
        m.degenerate = c.at("degenerate").get<bool>();
        r.metrics.classes.push_back(m);
        r.class_names.push_back(c.at("class").get<std::string>());
    }
    const auto& cm = j.at("confusion_matrix");
    r.confusion = ConfusionMatrix(cm.size());
    for (std::size_t t = 0; t < cm.size(); ++t) {
        if (cm[t].size() != cm.size()) throw std::invalid_argument("confusion_matrix is not square");
        for (std::size_t p = 0; p < cm.size(); ++p) r.confusion.at(t, p) = cm[t][p].get<std::uint64_t>();
    }
    if (cm.size() != r.class_names.size()) throw std::invalid_argument("confusion_matrix and per_class disagree");
    // Recomputed rather than read, so a hand-edited report cannot disagree with itself.
    r.bands = band_table(r.metrics, thresholds);
    return r;
}

}  // namespace hscls
