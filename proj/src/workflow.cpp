#include "hscls/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "hscls/checksum.hpp"
#include "hscls/csv.hpp"
#include "hscls/rng.hpp"
#include "hscls/version.hpp"

namespace hscls {

std::string config_hash(const nlohmann::json& config) { return to_hex(fnv1a64(config.dump())); }

nlohmann::json stamp(nlohmann::json artifact, const std::string& cfg_hash) {
    artifact["tool_version"] = kToolVersion;
    artifact["config_hash"] = cfg_hash;
    return artifact;
}

PrepResult prepare_corpus(const Dataset& raw, const PrepOptions& options) {
    if (raw.empty()) throw std::invalid_argument("prepare: the input corpus is empty");
    auto filtered = filter_by_assurance(raw, options.min_assurance);
    if (filtered.data.empty()) {
        throw std::runtime_error("prepare: " + filtered.warning.value_or("no records at the requested assurance level"));
    }
    for (const auto& [code, n] : filtered.data.class_counts()) {
        if (n < 2) {
            throw std::runtime_error("prepare: class " + code + " has a single record after filtering; a stratified split needs two");
        }
    }
    auto split = stratified_split(filtered.data, {options.test_fraction, options.seed, true});
    Dataset train = split.train;
    if (options.upsample) {
        train = stratified_upsample(split.train, options.minority_threshold, *options.upsample, options.seed);
    }
    std::vector<std::string> texts;
    texts.reserve(train.size());
    for (const auto& r : train.records()) texts.push_back(combined_text(r, default_stopwords()));

    PrepResult out{std::move(train), std::move(split.test), Vocabulary::build(texts, options.vocab_size), {}};

    nlohmann::json per_class = nlohmann::json::object();
    const auto raw_c = raw.class_counts(), filt_c = filtered.data.class_counts(), tr_c = split.train.class_counts(),
               up_c = out.train.class_counts(), te_c = out.test.class_counts();
    auto get = [](const std::map<std::string, std::size_t>& m, const std::string& k) {
        auto it = m.find(k);
        return it == m.end() ? std::size_t{0} : it->second;
    };
    for (const auto& [code, n] : raw_c) {
        const auto before = get(tr_c, code), after = get(up_c, code);
        per_class[code] = {{"raw", n},
                           {"filtered", get(filt_c, code)},
                           {"train", before},
                           {"train_upsampled", after},
                           {"added", after - before},
                           {"test", get(te_c, code)}};
    }
    out.report = {{"records",
                   {{"raw", raw.size()},
                    {"filtered", filtered.data.size()},
                    {"train", split.train.size()},
                    {"train_upsampled", out.train.size()},
                    {"test", out.test.size()}}},
                  {"per_class", per_class},
                  {"vocab_size", out.vocab.size()},
                  {"vocab_hash", out.vocab.hash()},
                  {"options",
                   {{"min_assurance", options.min_assurance},
                    {"test_fraction", options.test_fraction},
                    {"upsample", options.upsample ? (*options.upsample == UpsampleStrategy::mean ? "mean" : "median") : "off"},
                    {"minority_threshold", options.minority_threshold},
                    {"vocab_max_size", options.vocab_size},
                    {"seed", options.seed}}}};
    if (filtered.warning) out.report["warning"] = *filtered.warning;
    return out;
}

void write_prepared(const PrepResult& prep, const fs::path& dir, const std::string& cfg_hash) {
    fs::create_directories(dir);
    write_corpus_csv(dir / "train.csv", prep.train, true);
    write_corpus_csv(dir / "test.csv", prep.test, false);
    prep.vocab.save(dir / "vocab.tsv");
    write_file_atomic(dir / "prep_report.json", stamp(prep.report, cfg_hash).dump(2) + "\n");
}

ModelConfig resolve_model_config(Architecture arch, const std::optional<std::string>& preset,
                                 const std::optional<fs::path>& config_file) {
    if (config_file) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(*config_file));
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config file " + config_file->string() + ": " + e.what());
        }
        if (j.contains("config") && j["config"].is_object()) j = j["config"];
        return config_from_json(arch, j);
    }
    const std::string name = preset.value_or(arch == Architecture::dnn ? "paper_final" : "prose_345");
    return preset_config(arch, name);
}

std::string describe_config(const ModelConfig& cfg) {
    return to_string(architecture_of(cfg)) + " " + config_to_json(cfg).dump();
}

TrainResult train_on_dataset(const Dataset& train_set, const Vocabulary& vocab, const TrainJob& job,
                             const std::string& cfg_hash) {
    const auto classes = train_set.classes();
    Dataset fit = train_set, valid;
    bool can_validate = job.valid_fraction > 0.0;
    for (const auto& [code, n] : train_set.class_counts()) can_validate = can_validate && n >= 2;
    if (can_validate) {
        auto split = stratified_split(train_set, {job.valid_fraction, derive_seed(job.train.seed, "validation_split"), true});
        fit = std::move(split.train);
        valid = std::move(split.test);
    }
    const auto fit_seq = encode_dataset(fit, vocab, classes, job.max_len, default_stopwords());
    const auto valid_seq = encode_dataset(valid, vocab, classes, job.max_len, default_stopwords());
    auto model = build_model(job.config, {vocab.size(), classes.size(), job.max_len}, job.train.seed);
    return train(*model, fit_seq, valid_seq, job.train, {vocab.hash(), classes, cfg_hash});
}

std::string training_history_csv(std::span<const EpochStats> history) {
    std::string out = "epoch,train_loss,valid_accuracy\n";
    char buf[96];
    for (const auto& h : history) {
        if (std::isnan(h.valid_accuracy)) {
            std::snprintf(buf, sizeof buf, "%zu,%.10g,\n", h.epoch, h.train_loss);
        } else {
            std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", h.epoch, h.train_loss, h.valid_accuracy);
        }
        out += buf;
    }
    return out;
}

EvaluationOutcome evaluate_weights(const ModelWeights& weights, const Vocabulary& vocab, const Dataset& data,
                                   double beta) {
    std::vector<RawRecord> known;
    EvaluationOutcome out;
    for (const auto& r : data.records()) {
        if (std::find(weights.class_list.begin(), weights.class_list.end(), r.hs_code) == weights.class_list.end()) {
            ++out.skipped_unknown_class;
        } else {
            known.push_back(r);
        }
    }
    if (known.empty()) throw std::runtime_error("evaluate: no records belong to the model's classes");
    const Dataset kept(std::move(known));
    const auto seqs = encode_dataset(kept, vocab, weights.class_list, weights.dims.max_len, default_stopwords());
    const auto preds = predict(weights, seqs, vocab.hash());
    std::vector<std::int32_t> p, l;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        p.push_back(preds[i].label_id);
        l.push_back(seqs[i].label_id);
    }
    out.report = evaluate_predictions(p, l, weights.class_list, beta);
    return out;
}

std::vector<TokenSequence> encode_inference(std::span<const InferenceRecord> records, const Vocabulary& vocab,
                                            std::size_t max_len) {
    std::vector<TokenSequence> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back({tokenize(combined_text(r.short_description, r.medium_description, r.etim, default_stopwords()),
                                vocab, max_len),
                       -1, r.record_id});
    }
    return out;
}

std::string predictions_csv(std::span<const InferenceRecord> records, std::span<const Prediction> preds,
                            std::span<const std::string> class_list) {
    if (records.size() != preds.size()) throw std::invalid_argument("predictions_csv: record/prediction count mismatch");
    std::string out = std::string(kPredictionsHeader) + "\n";
    char buf[32];
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& p = preds[i];
        std::vector<std::size_t> order(p.probabilities.size());
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return p.probabilities[a] > p.probabilities[b]; });
        std::string codes, probs;
        for (std::size_t j = 0; j < std::min<std::size_t>(3, order.size()); ++j) {
            if (j) {
                codes += '|';
                probs += '|';
            }
            codes += class_list[order[j]];
            std::snprintf(buf, sizeof buf, "%.6f", p.probabilities[order[j]]);
            probs += buf;
        }
        std::snprintf(buf, sizeof buf, "%.6f", p.confidence);
        out += csv_line({records[i].record_id, p.code, buf, to_string(p.band), codes, probs});
    }
    return out;
}

AbOutcome run_abtest(const Dataset& data, const Vocabulary& vocab,
                     const std::vector<std::pair<std::string, ModelConfig>>& models, const AbOptions& options) {
    if (models.size() < 2) throw std::invalid_argument("abtest: at least two models are required");
    const auto classes = data.classes();
    const auto seqs = encode_dataset(data, vocab, classes, options.max_len, default_stopwords());
    std::vector<std::int32_t> labels;
    for (const auto& s : seqs) labels.push_back(s.label_id);
    const auto folds = k_fold_split(labels, options.k, options.seed);

    std::vector<FoldResult> all;
    AbOutcome out;
    for (std::size_t m = 0; m < models.size(); ++m) {
        TrainConfig tc;
        tc.epochs = options.epochs;
        tc.batch_size = options.batch_size;
        tc.seed = derive_seed(options.seed, models[m].first);
        auto predictor = model_fold_predictor(models[m].second, {vocab.size(), classes.size(), options.max_len}, tc);
        auto results = run_cv(models[m].first, predictor, seqs, classes.size(), folds, options.threads);
        const bool any_ok = std::any_of(results.begin(), results.end(), [](const FoldResult& r) { return !r.failed; });
        if (!any_ok) {
            out.excluded_models.push_back(models[m].first + ": " + (results.empty() ? "no folds" : results.front().error));
            continue;
        }
        all.insert(all.end(), results.begin(), results.end());
    }
    std::size_t kept = 0;
    for (const auto& [name, cfg] : models) {
        kept += std::any_of(all.begin(), all.end(), [&](const FoldResult& r) { return r.model == name; });
    }
    if (kept < 2) throw std::runtime_error("abtest: fewer than two models completed any fold");
    out.report = build_report(all, classes, options.alpha, options.statistic, options.metric, options.beta);
    return out;
}

}  // namespace hscls
