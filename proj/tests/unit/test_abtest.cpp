#include <doctest.h>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "hscls/abtest.hpp"
#include "hscls/stats.hpp"
#include "hscls/workflow.hpp"
#include "support.hpp"

using namespace hscls;

namespace {

std::vector<std::int32_t> labels_of(std::size_t classes, std::size_t per_class) {
    std::vector<std::int32_t> out;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) out.push_back(static_cast<std::int32_t>(c));
    }
    return out;
}

std::vector<TokenSequence> sequences(std::span<const std::int32_t> labels) {
    std::vector<TokenSequence> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out.push_back({{labels[i] + 2}, labels[i], "r" + std::to_string(i)});
    }
    return out;
}

// Predicts the true label except with probability `error`, seeded per fold.
FoldPredictor noisy_oracle(double error, std::size_t n_classes, std::uint64_t seed) {
    return [=](std::span<const TokenSequence>, std::span<const TokenSequence> test, std::size_t fold) {
        Rng rng(derive_seed(seed, fold));
        std::vector<std::int32_t> out;
        for (const auto& s : test) {
            out.push_back(rng.bernoulli(error) ? static_cast<std::int32_t>(rng.below(n_classes)) : s.label_id);
        }
        return out;
    };
}

// F statistic written out from its definition.
double f_statistic(const std::vector<std::vector<double>>& groups) {
    double grand = 0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        for (double x : g) grand += x;
        n += g.size();
    }
    grand /= static_cast<double>(n);
    double between = 0, within = 0;
    for (const auto& g : groups) {
        double m = 0;
        for (double x : g) m += x / static_cast<double>(g.size());
        between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) within += (x - m) * (x - m);
    }
    return (between / static_cast<double>(groups.size() - 1)) / (within / static_cast<double>(n - groups.size()));
}

double ks_uniform(std::vector<double> p) {
    std::sort(p.begin(), p.end());
    const double n = static_cast<double>(p.size());
    double d = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        d = std::max({d, (static_cast<double>(i) + 1) / n - p[i], p[i] - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("incomplete beta matches Boost") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const double a = std::exp(rng.uniform(-3, 5)), b = std::exp(rng.uniform(-3, 5)), x = rng.uniform();
        const double want = boost::math::ibeta(a, b, x);
        CHECK(regularized_incomplete_beta(x, a, b) == doctest::Approx(want).epsilon(1e-10).scale(1e-300));
    }
    CHECK(regularized_incomplete_beta(0.0, 2, 3) == 0.0);
    CHECK(regularized_incomplete_beta(1.0, 2, 3) == 1.0);
    // I_x(1, b) = 1 - (1 - x)^b
    CHECK(regularized_incomplete_beta(0.3, 1, 2.5) == doctest::Approx(1 - std::pow(0.7, 2.5)).epsilon(1e-13));
}

TEST_CASE("F survival matches Boost") {
    Rng rng(2);
    for (int i = 0; i < 500; ++i) {
        const double d1 = 1 + rng.below(40), d2 = 1 + rng.below(200), f = std::exp(rng.uniform(-4, 4));
        const double want = boost::math::cdf(boost::math::complement(boost::math::fisher_f(d1, d2), f));
        CHECK(f_survival(f, d1, d2) == doctest::Approx(want).epsilon(1e-9).scale(1e-300));
    }
}

TEST_CASE("normal helpers, mean and median") {
    CHECK(normal_pdf(0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    const std::vector<double> two{0.5, 1.0}, three{0.8, 0.9, 1.0}, flat{0.9, 0.9, 0.9};
    CHECK(mean(two) == 0.75);
    CHECK(median(two) == 0.75);
    CHECK(mean(three) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(median(three) == 0.9);
    CHECK(mean(flat) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(median(flat) == 0.9);
    CHECK_THROWS(median(std::vector<double>{}));
}

}  // TEST_SUITE

TEST_SUITE("abtest") {

TEST_CASE("k-fold sizes") {
    const auto l74 = labels_of(1, 74);
    const auto f74 = k_fold_split(l74, 37, 1);
    for (const auto& f : f74.folds) CHECK(f.size() == 2);

    const auto l75 = labels_of(1, 75);
    const auto f75 = k_fold_split(l75, 37, 1);
    std::multiset<std::size_t> sizes;
    for (const auto& f : f75.folds) sizes.insert(f.size());
    CHECK(sizes.count(3) == 1);
    CHECK(sizes.count(2) == 36);
}

TEST_CASE("k-fold is a stratified partition and deterministic") {
    Rng rng(4);
    std::vector<std::int32_t> labels;
    for (int i = 0; i < 500; ++i) labels.push_back(static_cast<std::int32_t>(rng.below(7)));
    const auto a = k_fold_split(labels, 9, 12);
    std::vector<int> seen(labels.size(), 0);
    for (std::size_t f = 0; f < a.folds.size(); ++f) {
        for (auto i : a.folds[f]) {
            ++seen[i];
            CHECK(a.fold_of[i] == f);
        }
    }
    for (int s : seen) CHECK(s == 1);
    for (std::int32_t c = 0; c < 7; ++c) {
        std::vector<std::size_t> per(9, 0);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) ++per[a.fold_of[i]];
        }
        CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
    }
    CHECK(k_fold_split(labels, 9, 12).fold_of == a.fold_of);
    CHECK(k_fold_split(labels, 9, 13).fold_of != a.fold_of);
}

TEST_CASE("k=37, C=24 yields 888 precision and recall values per model") {
    const auto labels = labels_of(24, 40);
    const auto data = sequences(labels);
    const auto folds = k_fold_split(labels, 37, 3);
    std::vector<FoldResult> all;
    for (const auto& [name, err] : {std::pair{"dnn", 0.3}, std::pair{"text_cnn", 0.1}}) {
        const auto r = run_cv(name, noisy_oracle(err, 24, 5), data, 24, folds, 2);
        CHECK(r.size() == 37);
        all.insert(all.end(), r.begin(), r.end());
    }
    const auto table = aggregate(all, 24);
    for (std::size_t m = 0; m < 2; ++m) {
        std::size_t np = 0, nr = 0;
        for (std::size_t c = 0; c < 24; ++c) {
            np += table.samples(m, c, Metric::precision).size();
            nr += table.samples(m, c, Metric::recall).size();
        }
        CHECK(np == 888);
        CHECK(nr == 888);
    }
}

TEST_CASE("a throwing fold is recorded and the rest continue") {
    const auto labels = labels_of(3, 10);
    const auto data = sequences(labels);
    const auto folds = k_fold_split(labels, 5, 1);
    const FoldPredictor flaky = [](std::span<const TokenSequence>, std::span<const TokenSequence> test, std::size_t f) {
        if (f == 2) throw std::runtime_error("boom");
        std::vector<std::int32_t> out;
        for (const auto& s : test) out.push_back(s.label_id);
        return out;
    };
    const auto r = run_cv("m", flaky, data, 3, folds, 3);
    CHECK(r[2].failed);
    CHECK(r[2].error == "boom");
    CHECK(std::count_if(r.begin(), r.end(), [](const FoldResult& f) { return f.failed; }) == 1);
    CHECK(aggregate(r, 3).fold_count(0, 0) == 4);
}

TEST_CASE("aggregates") {
    MetricTable t({"a"}, 3, 1.2);
    t.samples(0, 0, Metric::precision) = {0.5, 1.0};
    t.samples(0, 1, Metric::precision) = {0.9, 0.9, 0.9};
    t.samples(0, 2, Metric::precision) = {1.0, 0.8, 0.9};
    CHECK(t.value(0, 0, Metric::precision, Statistic::mean) == 0.75);
    CHECK(t.value(0, 0, Metric::precision, Statistic::median) == 0.75);
    CHECK(t.value(0, 1, Metric::precision, Statistic::mean) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(t.value(0, 1, Metric::precision, Statistic::median) == 0.9);
    CHECK(t.value(0, 2, Metric::precision, Statistic::mean) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(t.value(0, 2, Metric::precision, Statistic::median) == 0.9);
    CHECK(std::isnan(t.value(0, 0, Metric::recall, Statistic::mean)));
}

TEST_CASE("gaussian transform") {
    const std::vector<double> xs{0.5, 0.9, 1.0, 0.0};
    const auto z = gaussian_transform(xs);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == doctest::Approx(std::log(9.0)).epsilon(1e-14));
    // 1 - (1 - eps) is not exactly eps in binary, hence the looser tolerance.
    CHECK(z[2] == doctest::Approx(std::log((1 - 1e-6) / 1e-6)).epsilon(1e-10));
    CHECK(z[2] == doctest::Approx(13.8155).epsilon(1e-5));
    CHECK(z[3] == doctest::Approx(-z[2]).epsilon(1e-10));
}

TEST_CASE("ANOVA fixtures") {
    const std::vector<std::vector<double>> g{{1, 2}, {5, 6}};
    const auto r = one_way_anova(g);
    CHECK(r.f_statistic == doctest::Approx(32.0).epsilon(1e-14));
    // p = I_{2/34}(1, 1/2) = 1 - (1 - 2/34)^{1/2}
    const double closed = 1 - std::sqrt(1 - 2.0 / 34.0);
    CHECK(std::abs(r.p_value - closed) <= 1e-9);
    CHECK(std::abs(r.p_value - 0.029857) <= 1e-6);

    const std::vector<std::vector<double>> same{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
    const auto z = one_way_anova(same);
    CHECK(z.f_statistic == 0.0);
    CHECK(z.p_value == 1.0);

    const std::vector<std::vector<double>> one{{1, 2}, {3}};
    CHECK_THROWS(one_way_anova(one));
}

TEST_CASE("ANOVA F agrees with the textbook formula") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
        std::vector<std::vector<double>> groups(2 + rng.below(4));
        for (auto& g : groups) {
            g.resize(2 + rng.below(10));
            const double shift = rng.uniform(-1, 1);
            for (auto& x : g) x = shift + rng.normal();
        }
        const auto r = one_way_anova(groups);
        CHECK(r.f_statistic == doctest::Approx(f_statistic(groups)).epsilon(1e-10));
    }
}

TEST_CASE("ANOVA p-values are uniform under the null") {
    Rng rng(7);
    std::vector<double> ps;
    for (int rep = 0; rep < 3000; ++rep) {
        std::vector<std::vector<double>> groups(3, std::vector<double>(6));
        for (auto& g : groups) {
            for (auto& x : g) x = rng.normal();
        }
        ps.push_back(one_way_anova(groups).p_value);
    }
    // Two-sided 1% critical value is about 1.63 / sqrt(n).
    CHECK(ks_uniform(ps) < 1.63 / std::sqrt(3000.0));
}

TEST_CASE("recommendation rules") {
    MetricTable t({"dnn", "text_cnn"}, 3, 1.2);
    auto fill = [&](std::size_t m, std::size_t c, std::vector<double> p, std::vector<double> r) {
        t.samples(m, c, Metric::precision) = p;
        t.samples(m, c, Metric::recall) = r;
        for (std::size_t i = 0; i < p.size(); ++i) t.samples(m, c, Metric::f_beta).push_back(f_beta(p[i], r[i]));
    };
    fill(0, 0, {0.5, 0.6}, {0.5, 0.6});
    fill(1, 0, {0.9, 0.95}, {0.9, 0.95});
    // Equal precision aggregates; recall breaks the tie.
    fill(0, 1, {0.8, 0.8}, {0.9, 0.9});
    fill(1, 1, {0.8, 0.8}, {0.7, 0.7});
    // Exact tie everywhere: the smaller name wins.
    fill(0, 2, {0.7, 0.8}, {0.7, 0.8});
    fill(1, 2, {0.7, 0.8}, {0.7, 0.8});
    std::vector<AnovaResult> anova(3);
    anova[0].p_value = 0.01;
    anova[1].p_value = 0.2;
    anova[2].p_value = 1.0;
    const auto rec = recommend(t, anova, 0.05, Statistic::mean, Metric::precision);
    CHECK(rec[0].winner == "text_cnn");
    CHECK(rec[0].significant);
    CHECK(rec[1].winner == "dnn");
    CHECK_FALSE(rec[1].significant);
    CHECK(rec[2].winner == "dnn");
}

TEST_CASE("a dominant model wins every class significantly") {
    const auto labels = labels_of(4, 30);
    const auto data = sequences(labels);
    const auto folds = k_fold_split(labels, 10, 2);
    auto good = run_cv("good", noisy_oracle(0.0, 4, 1), data, 4, folds);
    const auto bad = run_cv("bad", noisy_oracle(0.6, 4, 2), data, 4, folds);
    good.insert(good.end(), bad.begin(), bad.end());
    const auto report = build_report(good, {"a", "b", "c", "d"}, 0.05, Statistic::mean, Metric::f_beta);
    for (const auto& r : report.recommendations) {
        CHECK(r.winner == "good");
        CHECK(r.significant);
    }
    CHECK(overall_winner(report) == "good");
    const auto v = verdict_json(report);
    CHECK(v.at("overall_winner") == "good");
    CHECK(report_csv(report).find("good") != std::string::npos);
}

TEST_CASE("k=2 cross-validation of real models on a separable corpus") {
    const auto data = test::separable_corpus(20, 9);
    std::vector<std::string> texts;
    for (const auto& r : data.records()) texts.push_back(combined_text(r, default_stopwords()));
    const auto vocab = Vocabulary::build(texts, 100);
    const auto seqs = encode_dataset(data, vocab, data.classes(), 8, default_stopwords());
    const auto folds = k_fold_split(data, 2, 1);
    TextCnnConfig cfg;
    cfg.kernel_sizes = {2};
    cfg.filters_per_kernel = 8;
    cfg.embedding_dim = 8;
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 4;
    tc.optimizer.learning_rate = 0.01;
    const auto pred = model_fold_predictor(cfg, {vocab.size(), 2, 8}, tc);
    const auto r = run_cv("text_cnn", pred, seqs, 2, folds);
    REQUIRE(r.size() == 2);
    for (const auto& f : r) {
        CHECK_FALSE(f.failed);
        for (double p : f.precision) CHECK(p >= 0.9);
        for (double x : f.recall) CHECK(x >= 0.9);
    }
    const auto again = run_cv("text_cnn", pred, seqs, 2, folds);
    CHECK(again[0].precision == r[0].precision);
    CHECK(again[1].recall == r[1].recall);
}

}  // TEST_SUITE
