#include <doctest.h>

#include <boost/crc.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>

#include "hscls/checksum.hpp"
#include "hscls/gradcheck.hpp"
#include "hscls/layers.hpp"
#include "hscls/models.hpp"
#include "hscls/weights_io.hpp"
#include "support.hpp"

using namespace hscls;

namespace {

// Parameter count written out from the layer shapes, independent of the
// model classes.
std::size_t expected_params(const ModelConfig& cfg, const ModelDims& d) {
    if (const auto* dnn = std::get_if<DnnConfig>(&cfg)) {
        std::size_t n = d.vocab_size * dnn->embedding_dim;
        std::size_t in = d.max_len * dnn->embedding_dim;
        for (auto w : dnn_layer_plan(*dnn)) {
            n += in * w + w;
            in = w;
        }
        return n + in * d.n_classes + d.n_classes;
    }
    const auto& cnn = std::get<TextCnnConfig>(cfg);
    const std::size_t F = cnn.filters_per_kernel, D = cnn.embedding_dim;
    std::size_t n = d.vocab_size * D;
    for (auto h : cnn.kernel_sizes) {
        n += F * h * D + F;
        n += (cnn.n_conv_blocks - 1) * (F * h * F + F);
    }
    return n + cnn.kernel_sizes.size() * F * d.n_classes + d.n_classes;
}

IdBatch random_ids(std::size_t rows, std::size_t cols, std::size_t vocab, Rng& rng) {
    IdBatch b{rows, cols, {}};
    for (std::size_t i = 0; i < rows * cols; ++i) b.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    return b;
}

std::vector<TokenSequence> encode(const Dataset& data, const Vocabulary& vocab, std::size_t max_len) {
    return encode_dataset(data, vocab, data.classes(), max_len, default_stopwords());
}

Vocabulary vocab_of(const Dataset& data) {
    std::vector<std::string> texts;
    for (const auto& r : data.records()) texts.push_back(combined_text(r, default_stopwords()));
    return Vocabulary::build(texts, 1000);
}

std::uint32_t boost_crc32c(std::string_view bytes) {
    boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true> crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("dnn_layer_plan examples") {
    DnnConfig a;
    a.initial_neurons = 100;
    a.neuron_shrink = 0.5;
    a.neuron_pct = 175.0 / 5000.0;
    a.n_layer_cap = 15;
    CHECK(dnn_layer_plan(a) == std::vector<std::size_t>{100, 50, 25});

    DnnConfig b = a;
    b.initial_neurons = 120;
    b.neuron_pct = 100.0 / 5000.0;
    CHECK(dnn_layer_plan(b) == std::vector<std::size_t>{120});

    DnnConfig c;
    c.initial_neurons = 25;
    c.neuron_shrink = 0.95;
    c.neuron_pct = 1.0;
    c.n_layer_cap = 3;
    CHECK(dnn_layer_plan(c) == std::vector<std::size_t>{25, 24, 23});
}

TEST_CASE("dnn_layer_plan invariants over the search space") {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        DnnConfig c;
        c.initial_neurons = 11 + rng.below(164);
        c.neuron_pct = rng.uniform(0.35, 1.0);
        c.neuron_shrink = rng.uniform(0.25, 0.95);
        c.n_layer_cap = 1 + rng.below(15);
        const auto plan = dnn_layer_plan(c);
        REQUIRE(!plan.empty());
        CHECK(plan.front() == c.initial_neurons);
        CHECK(plan.size() <= c.n_layer_cap);
        const auto budget = static_cast<std::size_t>(std::llround(c.neuron_pct * 5000));
        std::size_t total = 0;
        for (std::size_t i = 0; i < plan.size(); ++i) {
            total += plan[i];
            if (i > 0) {
                CHECK(plan[i] >= 2);
                CHECK(plan[i] == std::max<std::size_t>(1, std::llround(plan[i - 1] * c.neuron_shrink)));
            }
        }
        if (plan.size() > 1) CHECK(total <= budget);
    }
}

TEST_CASE("presets") {
    const auto fin = TextCnnConfig::paper_final();
    CHECK(fin.kernel_sizes == std::vector<std::size_t>{5});
    CHECK(fin.filters_per_kernel == 128);
    CHECK(fin.embedding_dim == 100);
    CHECK(fin.n_conv_blocks == 1);
    CHECK(TextCnnConfig::prose_345().kernel_sizes == std::vector<std::size_t>{3, 4, 5});
    CHECK(fin.within_search_space());

    const auto base = DnnConfig::paper_base();
    CHECK(base.initial_neurons == 11);
    CHECK(base.neuron_pct == 0.44);
    CHECK(base.within_search_space());
    CHECK(DnnConfig::paper_final().within_search_space());
    CHECK_THROWS(preset_config(Architecture::dnn, "nope"));
}

TEST_CASE("config JSON round-trip") {
    const ModelConfig a = DnnConfig::paper_base();
    CHECK(config_from_json(Architecture::dnn, config_to_json(a)) == a);
    const ModelConfig b = TextCnnConfig::prose_345();
    CHECK(config_from_json(Architecture::text_cnn, config_to_json(b)) == b);
}

TEST_CASE("parameter counts match the closed form") {
    const ModelDims dims{50, 3, 10};
    std::vector<ModelConfig> cfgs{DnnConfig::paper_base(), DnnConfig::paper_final(), TextCnnConfig::prose_345(),
                                  TextCnnConfig::paper_final()};
    TextCnnConfig deep;
    deep.kernel_sizes = {2, 3};
    deep.filters_per_kernel = 6;
    deep.embedding_dim = 5;
    deep.n_conv_blocks = 3;
    cfgs.push_back(deep);
    DnnConfig tiny;
    tiny.initial_neurons = 1;
    tiny.n_layer_cap = 1;
    tiny.embedding_dim = 2;
    cfgs.push_back(tiny);
    for (const auto& cfg : cfgs) {
        auto m = build_model(cfg, dims, 1);
        CHECK(m->parameter_count() == expected_params(cfg, dims));
    }
}

TEST_CASE("smallest dnn and full-width text-cnn kernel produce N x C probabilities") {
    Rng rng(2);
    DnnConfig tiny;
    tiny.initial_neurons = 1;
    tiny.n_layer_cap = 1;
    tiny.embedding_dim = 3;
    auto m = build_dnn(tiny, {20, 4, 1}, 3);
    const auto p = softmax(m->forward(random_ids(6, 1, 20, rng), false, 0));
    CHECK(p.shape() == Shape{6, 4});

    TextCnnConfig whole;
    whole.kernel_sizes = {10};
    whole.filters_per_kernel = 7;
    whole.embedding_dim = 8;
    auto c = build_text_cnn(whole, {50, 3, 10}, 3);
    CHECK(c->forward(random_ids(4, 10, 50, rng), false, 0).shape() == Shape{4, 3});

    TextCnnConfig too_wide = whole;
    too_wide.kernel_sizes = {11};
    CHECK_THROWS(build_text_cnn(too_wide, {50, 3, 10}, 3));
}

TEST_CASE("same seed builds identical weights") {
    for (const ModelConfig& cfg : {ModelConfig{DnnConfig::paper_base()}, ModelConfig{TextCnnConfig::prose_345()}}) {
        auto a = build_model(cfg, {40, 3, 8}, 17);
        auto b = build_model(cfg, {40, 3, 8}, 17);
        auto c = build_model(cfg, {40, 3, 8}, 18);
        auto wa = serialize_weights(snapshot_weights(*a, "v", {"a", "b", "c"}, {}));
        CHECK(wa == serialize_weights(snapshot_weights(*b, "v", {"a", "b", "c"}, {})));
        CHECK(wa != serialize_weights(snapshot_weights(*c, "v", {"a", "b", "c"}, {})));
    }
}

TEST_CASE("full-model gradients match finite differences") {
    const ModelDims dims{50, 3, 10};
    TextCnnConfig cnn;
    cnn.kernel_sizes = {2, 3};
    cnn.filters_per_kernel = 4;
    cnn.embedding_dim = 8;
    cnn.n_conv_blocks = 2;
    DnnConfig dnn;
    dnn.initial_neurons = 12;
    dnn.neuron_shrink = 0.5;
    dnn.embedding_dim = 8;
    dnn.n_layer_cap = 3;
    dnn.dropout = 0.2;
    for (const ModelConfig& cfg : {ModelConfig{cnn}, ModelConfig{dnn}}) {
        auto model = build_model(cfg, dims, 5);
        Rng rng(6);
        const auto ids = random_ids(4, 10, 50, rng);
        const std::vector<std::int32_t> labels{0, 2, 1, 2};
        auto loss = [&] { return cross_entropy_loss(softmax(model->forward(ids, true, 99)), labels); };
        model->zero_grad();
        const auto probs = softmax(model->forward(ids, true, 99));
        model->backward(softmax_cross_entropy_grad(probs, labels));
        const auto params = model->parameters();
        GradCheckOptions opt;
        opt.samples = 200;
        opt.seed = 7;
        const auto rep = finite_difference_check(loss, params, opt, [&] { return model->activation_signature(); });
        CHECK(rep.checked >= 100);
        CHECK(rep.max_relative_error < 1e-4);
    }
}

TEST_CASE("training on a separable corpus reaches perfect validation accuracy") {
    const auto data = hscls::test::separable_corpus(40, 3);
    const auto vocab = vocab_of(data);
    const auto all = encode(data, vocab, 8);
    std::vector<TokenSequence> tr, va;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 5 == 0 ? va : tr).push_back(all[i]);

    TextCnnConfig cfg;
    cfg.kernel_sizes = {2, 3};
    cfg.filters_per_kernel = 8;
    cfg.embedding_dim = 10;
    auto model = build_text_cnn(cfg, {vocab.size(), 2, 8}, 1);
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch_size = 8;
    tc.optimizer.learning_rate = 0.01;
    tc.early_stop_patience = 10;
    const TrainContext ctx{vocab.hash(), data.classes(), "h"};
    const auto res = train(*model, tr, va, tc, ctx);
    CHECK(res.history.back().valid_accuracy == 1.0);

    auto again = build_text_cnn(cfg, {vocab.size(), 2, 8}, 1);
    const auto res2 = train(*again, tr, va, tc, ctx);
    CHECK(weights_hash(res2.weights) == weights_hash(res.weights));
    REQUIRE(res2.history.size() == res.history.size());
    for (std::size_t i = 0; i < res.history.size(); ++i) CHECK(res2.history[i].train_loss == res.history[i].train_loss);

    tc.epochs = 0;
    CHECK_THROWS_AS(train(*again, tr, va, tc, ctx), std::invalid_argument);
}

TEST_CASE("predict contracts") {
    const auto data = hscls::test::separable_corpus(30, 4);
    const auto vocab = vocab_of(data);
    const auto seqs = encode(data, vocab, 8);
    DnnConfig cfg = DnnConfig::paper_base();
    auto model = build_dnn(cfg, {vocab.size(), 2, 8}, 2);
    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 4;
    tc.optimizer.learning_rate = 0.01;
    const auto res = train(*model, seqs, {}, tc, {vocab.hash(), data.classes(), "h"});
    const auto preds = predict(res.weights, seqs, vocab.hash());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double s = 0;
        for (double p : preds[i].probabilities) s += p;
        CHECK(std::abs(s - 1.0) <= 1e-12);
        correct += preds[i].label_id == seqs[i].label_id;
        CHECK(preds[i].code == data.classes()[static_cast<std::size_t>(preds[i].label_id)]);
    }
    // Memorized training inputs come back with their own labels.
    CHECK(correct == seqs.size());
    CHECK_THROWS_AS(predict(res.weights, seqs, "other"), VocabularyMismatchError);
}

TEST_CASE("fresh models are near-uniform") {
    // One freshly seeded model per input: over the init distribution every
    // class has expected probability exactly 1/C, so the sample mean of 1000
    // draws must land within 3 standard errors of it.
    Rng rng(10);
    const std::size_t C = 4, N = 1000;
    TextCnnConfig cnn = TextCnnConfig::prose_345();
    cnn.filters_per_kernel = 16;
    for (const ModelConfig& cfg : {ModelConfig{DnnConfig::paper_base()}, ModelConfig{cnn}}) {
        std::vector<std::vector<double>> probs(C);
        for (std::size_t n = 0; n < N; ++n) {
            auto m = build_model(cfg, {50, C, 10}, 1000 + n);
            const auto p = softmax(m->forward(random_ids(1, 10, 50, rng), false, 0));
            for (std::size_t c = 0; c < C; ++c) probs[c].push_back(p[c]);
        }
        for (std::size_t c = 0; c < C; ++c) {
            double mean = 0, sq = 0;
            for (double v : probs[c]) mean += v / N;
            for (double v : probs[c]) sq += (v - mean) * (v - mean) / (N - 1);
            CHECK(std::abs(mean - 1.0 / C) <= 3 * std::sqrt(sq / N));
        }
    }
}

TEST_CASE("confidence bands") {
    CHECK(confidence_band(0.90) == ConfidenceBand::high);
    CHECK(confidence_band(0.8999) == ConfidenceBand::medium);
    CHECK(confidence_band(0.80) == ConfidenceBand::medium);
    CHECK(confidence_band(0.5) == ConfidenceBand::low);
}

TEST_CASE("crc32c agrees with Boost.CRC") {
    CHECK(crc32c("123456789") == 0xE3069283u);
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        std::string s(rng.below(300), '\0');
        for (auto& ch : s) ch = static_cast<char>(rng.below(256));
        CHECK(crc32c(s) == boost_crc32c(s));
    }
}

TEST_CASE("weights file round-trip and corruption") {
    test::TempDir dir;
    auto model = build_text_cnn(TextCnnConfig::paper_final(), {30, 3, 6}, 4);
    TrainingMetadata meta;
    meta.seed = 4;
    const auto w = snapshot_weights(*model, "abc", {"850100", "850101", "850102"}, meta);
    save_weights(w, dir / "w.bin");
    const auto back = load_weights(dir / "w.bin");
    CHECK(back == w);
    CHECK(weights_hash(back) == weights_hash(w));
    auto rebuilt = instantiate(back);
    CHECK(serialize_weights(snapshot_weights(*rebuilt, "abc", w.class_list, meta)) == serialize_weights(w));

    auto bytes = serialize_weights(w);
    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(deserialize_weights(flipped), WeightsChecksumError);
    CHECK_THROWS_AS(deserialize_weights(bytes.substr(0, bytes.size() - 9)), WeightsFormatError);

    // Rewrite the manifest with a newer format version and a valid checksum.
    std::uint64_t mlen = 0;
    std::memcpy(&mlen, bytes.data() + 8, 8);
    auto manifest = nlohmann::json::parse(bytes.substr(16, mlen));
    manifest["format_version"] = kWeightsFormatVersion + 1;
    const auto mtext = manifest.dump();
    std::string future = bytes.substr(0, 8);
    const std::uint64_t new_len = mtext.size();
    future.append(reinterpret_cast<const char*>(&new_len), 8);
    future += mtext;
    future += bytes.substr(16 + mlen, bytes.size() - 16 - mlen - 4);
    const std::uint32_t crc = boost_crc32c(future);
    future.append(reinterpret_cast<const char*>(&crc), 4);
    try {
        deserialize_weights(future);
        FAIL("expected WeightsVersionError");
    } catch (const WeightsVersionError& e) {
        CHECK(e.found_version() == kWeightsFormatVersion + 1);
    }
}

}  // TEST_SUITE
