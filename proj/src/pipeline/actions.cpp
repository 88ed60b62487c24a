#include "hscls/pipeline/actions.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hscls/checksum.hpp"
#include "hscls/csv.hpp"
#include "hscls/pipeline/drift.hpp"
#include "hscls/rng.hpp"
#include "hscls/tuner.hpp"
#include "hscls/weights_io.hpp"

namespace hscls {

PrepOptions prep_options(const Settings& s) {
    PrepOptions o;
    o.min_assurance = s.min_assurance;
    o.test_fraction = s.test_fraction;
    o.upsample = s.upsample == "off" ? std::nullopt : std::optional(parse_upsample_strategy(s.upsample));
    o.minority_threshold = s.minority_threshold;
    o.vocab_size = s.vocab_size;
    o.seed = s.seed;
    return o;
}

TrainConfig train_config(const Settings& s) {
    TrainConfig t;
    t.epochs = s.epochs;
    t.batch_size = s.batch_size;
    t.seed = s.seed;
    t.early_stop_patience = s.patience;
    return t;
}

AbOptions ab_options(const Settings& s) {
    AbOptions o;
    o.k = s.ab_k;
    o.seed = derive_seed(s.seed, "abtest");
    o.max_len = s.max_len;
    o.epochs = s.ab_epochs;
    o.batch_size = s.batch_size;
    o.metric = parse_metric(s.ab_metric);
    o.statistic = parse_statistic(s.ab_statistic);
    o.alpha = s.alpha;
    o.beta = s.beta;
    o.threads = s.threads;
    return o;
}

BandThresholds band_thresholds(const Settings& s) { return {s.band_medium, s.band_high}; }

std::vector<std::string> candidate_models(const Settings& s) {
    std::vector<std::string> out;
    std::stringstream in(s.models);
    for (std::string name; std::getline(in, name, ',');) {
        name.erase(0, name.find_first_not_of(" \t"));
        name.erase(name.find_last_not_of(" \t") + 1);
        if (name.empty()) continue;
        parse_architecture(name);  // rejects unknown names
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    }
    if (out.empty()) throw std::invalid_argument("setting models: no model listed");
    return out;
}

ModelConfig preset_for(const Settings& s, const std::string& model) {
    const auto arch = parse_architecture(model);
    return preset_config(arch, arch == Architecture::dnn ? s.dnn_preset : s.text_cnn_preset);
}

TuneResult tune_model(const Dataset& train_set, const Vocabulary& vocab, Architecture arch, const Settings& s,
                      const std::string& cfg_hash, std::function<void(const Trial&)> on_trial) {
    if (s.valid_fraction <= 0.0) throw std::invalid_argument("tuning needs valid_fraction > 0");
    const std::string model = to_string(arch);
    Objective objective = [&](const Point& p) {
        TrainJob job;
        job.config = config_from_point(arch, p);
        job.max_len = s.max_len;
        job.train = train_config(s);
        job.train.epochs = s.tune_epochs;
        job.train.seed = derive_seed(s.seed, model);
        job.valid_fraction = s.valid_fraction;
        const auto result = train_on_dataset(train_set, vocab, job, cfg_hash);
        double best = 0.0;
        for (const auto& h : result.history) {
            if (!std::isnan(h.valid_accuracy)) best = std::max(best, h.valid_accuracy);
        }
        return best;
    };
    TuneOptions opts;
    opts.budget = s.tune_budget;
    opts.n_init = s.tune_n_init;
    opts.seed = derive_seed(s.seed, "tune:" + model);
    opts.on_trial = std::move(on_trial);
    return tune(space_for(arch), objective, opts);
}

namespace {

using nlohmann::json;

void copy_atomic(const fs::path& from, const fs::path& to) {
    fs::create_directories(to.parent_path());
    write_file_atomic(to, read_file(from));
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

void write_json(const fs::path& p, const json& j) {
    fs::create_directories(p.parent_path());
    write_file_atomic(p, j.dump(2) + "\n");
}

std::string content_hash(const fs::path& p) { return to_hex(fnv1a64(read_file(p))); }

const std::string& first_payload(const ActionContext& ctx) {
    if (ctx.event.payload.empty()) throw std::invalid_argument("event " + ctx.event.event_id + " has no payload");
    return ctx.event.payload.front();
}

// ---- inference ----------------------------------------------------------------

void inference_validate_input(ActionContext& ctx) {
    const fs::path src = first_payload(ctx);
    const auto records = read_inference_csv(src);
    copy_atomic(src, ctx.run_dir / run_files::input);
    ctx.log(std::to_string(records.size()) + " records from " + src.string());
}

void inference_preprocess(ActionContext& ctx) {
    const auto records = read_inference_csv(ctx.run_dir / run_files::input);
    std::string out = "record_id,text\n";
    for (const auto& r : records) {
        out += csv_line({r.record_id, combined_text(r.short_description, r.medium_description, r.etim, default_stopwords())});
    }
    write_file_atomic(ctx.run_dir / run_files::preprocessed, out);
}

void inference_load_active_model(ActionContext& ctx) {
    const fs::path dir = ctx.run_dir / run_files::model_dir;
    if (fs::exists(dir / "model.json")) {
        ctx.log("model already pinned");
        return;
    }
    const auto entry = ctx.registry.active();
    if (!entry) throw std::runtime_error("no active model in the registry");
    // Check the checksum before pinning.
    load_weights(entry->weights_path());
    copy_atomic(entry->weights_path(), dir / "weights.bin");
    copy_atomic(entry->vocab_path(), dir / "vocab.tsv");
    json info = {{"version", entry->version}, {"model", entry->model}, {"weights_hash", entry->weights_hash}};
    if (fs::exists(entry->dir / "reference.json")) {
        copy_atomic(entry->dir / "reference.json", dir / "reference.json");
        info["reference"] = "reference.json";
    }
    // model.json last: its presence marks the pin complete.
    write_json(dir / "model.json", info);
    ctx.log("pinned registry version " + std::to_string(entry->version));
}

struct Preprocessed {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
};

Preprocessed read_preprocessed(const fs::path& p) {
    Preprocessed out;
    const auto rows = parse_csv(read_file(p));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].fields.size() != 2) throw CsvParseError(rows[i].line, "expected record_id,text");
        out.ids.push_back(rows[i].fields[0]);
        out.texts.push_back(rows[i].fields[1]);
    }
    return out;
}

void inference_predict(ActionContext& ctx) {
    const fs::path dir = ctx.run_dir / run_files::model_dir;
    const auto weights = load_weights(dir / "weights.bin");
    const auto vocab = Vocabulary::load(dir / "vocab.tsv");
    const auto pre = read_preprocessed(ctx.run_dir / run_files::preprocessed);
    std::vector<TokenSequence> seqs;
    std::vector<InferenceRecord> records;
    for (std::size_t i = 0; i < pre.ids.size(); ++i) {
        seqs.push_back({tokenize(pre.texts[i], vocab, weights.dims.max_len), -1, pre.ids[i]});
        records.push_back({pre.ids[i], {}, {}, std::nullopt});
    }
    const auto preds = predict(weights, seqs, vocab.hash(), band_thresholds(ctx.settings));
    const fs::path out = ctx.run_dir / run_files::raw_predictions;
    fs::create_directories(out.parent_path());
    write_file_atomic(out, predictions_csv(records, preds, weights.class_list));
}

// Live window: predicted classes and the normalized input tokens.
Distributions live_distributions(const fs::path& run_dir) {
    Distributions d;
    const auto pre = read_preprocessed(run_dir / run_files::preprocessed);
    for (const auto& t : pre.texts) {
        for (const auto& tok : split_whitespace(t)) d.tokens[tok] += 1.0;
    }
    const auto rows = parse_csv(read_file(run_dir / run_files::raw_predictions));
    for (std::size_t i = 1; i < rows.size(); ++i) d.classes[rows[i].fields.at(1)] += 1.0;
    return d;
}

void inference_write_results(ActionContext& ctx) {
    copy_atomic(ctx.run_dir / run_files::raw_predictions, ctx.run_dir / run_files::predictions);

    const fs::path model_dir = ctx.run_dir / run_files::model_dir;
    const auto model = read_json(model_dir / "model.json");
    const fs::path drift_path = ctx.run_dir / run_files::drift;
    if (!model.contains("reference")) {
        write_json(drift_path, {{"skipped", "the active model has no reference distributions"}});
        return;
    }
    const auto live = live_distributions(ctx.run_dir);
    if (live.classes.empty() && live.tokens.empty()) {
        write_json(drift_path, {{"skipped", "empty input"}});
        return;
    }
    const auto reference = distributions_from_json(read_json(model_dir / "reference.json"));
    const auto report = drift_check(reference, live, ctx.settings.drift_threshold,
                                    "registry/v" + std::to_string(model.at("version").get<int>()), ctx.run.run_id);
    write_json(drift_path, stamp(to_json(report), ctx.run.config_hash));
    if (!report.triggered) return;

    // The alert is staged in the run directory; the marker makes a replay
    // skip re-sending it.
    const fs::path sent = ctx.run_dir / "work" / "alert.sent";
    if (fs::exists(sent)) return;
    Event alert;
    alert.event_id = "drift-" + ctx.run.run_id;
    alert.kind = EventKind::drift_alert;
    alert.payload = {fs::absolute(drift_path).string()};
    alert.timestamp = utc_timestamp();
    alert.source = EventSource::cli;
    const fs::path target_dir = ctx.settings.drift_retrain ? ctx.workspace.drop_dir("retraining") : ctx.workspace.alerts_dir();
    fs::create_directories(target_dir);
    write_file_atomic(target_dir / (alert.event_id + ".json"), to_json(alert).dump(2) + "\n");
    write_file_atomic(sent, target_dir.string() + "\n");
    ctx.log("drift above threshold; alert written to " + target_dir.string());
}

// ---- retraining ---------------------------------------------------------------

void retraining_validate_input(ActionContext& ctx) {
    std::optional<fs::path> src;
    for (const auto& p : ctx.event.payload) {
        if (fs::path(p).extension() == ".csv") {
            src = p;
            break;
        }
    }
    std::string origin = "payload";
    if (!src) {
        if (ctx.event.kind != EventKind::drift_alert) {
            throw std::invalid_argument("retraining request " + ctx.event.event_id + " has no .csv payload");
        }
        // A drift alert carries no labels: retrain on the corpus behind the
        // active model.
        const auto active = ctx.registry.active();
        if (!active || active->source_run.empty()) {
            throw std::runtime_error("drift alert without a corpus, and no active model with a source run");
        }
        src = ctx.workspace.run_dir(active->source_run) / run_files::input;
        origin = "corpus of " + active->source_run;
    }
    const auto data = read_corpus_csv(*src);
    copy_atomic(*src, ctx.run_dir / run_files::input);
    write_json(ctx.run_dir / run_files::snapshot,
               {{"source", src->string()},
                {"origin", origin},
                {"records", data.size()},
                {"data_hash", content_hash(ctx.run_dir / run_files::input)}});
    ctx.log(std::to_string(data.size()) + " labeled records (" + origin + ")");
}

void retraining_preprocess(ActionContext& ctx) {
    const auto raw = read_corpus_csv(ctx.run_dir / run_files::input);
    const auto prep = prepare_corpus(raw, prep_options(ctx.settings));
    const fs::path dir = ctx.run_dir / run_files::prepared_dir;
    fs::create_directories(dir);
    write_prepared(prep, dir, ctx.run.config_hash);
    std::vector<RawRecord> originals;
    for (const auto& r : prep.train.records()) {
        if (!r.upsampled) originals.push_back(r);
    }
    write_json(dir / "reference.json", to_json(distributions_of(Dataset(std::move(originals)))));
}

struct Prepared {
    Dataset train;
    Dataset test;
    Vocabulary vocab;
};

Prepared load_prepared(const fs::path& run_dir) {
    const fs::path dir = run_dir / run_files::prepared_dir;
    return {read_corpus_csv(dir / "train.csv"), read_corpus_csv(dir / "test.csv"), Vocabulary::load(dir / "vocab.tsv")};
}

TrainJob job_for(const Settings& s, ModelConfig cfg, const std::string& model) {
    TrainJob job;
    job.config = std::move(cfg);
    job.max_len = s.max_len;
    job.train = train_config(s);
    job.train.seed = derive_seed(s.seed, model);
    job.valid_fraction = s.valid_fraction;
    return job;
}

void retraining_tune_or_load_config(ActionContext& ctx) {
    if (!ctx.settings.tune) throw StateSkipped("tuning disabled; presets used");
    const auto data = load_prepared(ctx.run_dir);
    const fs::path dir = ctx.run_dir / run_files::configs_dir;
    for (const auto& model : candidate_models(ctx.settings)) {
        if (fs::exists(dir / (model + ".json"))) continue;
        const auto arch = parse_architecture(model);
        const auto result = tune_model(data.train, data.vocab, arch, ctx.settings, ctx.run.config_hash);
        const auto space = space_for(arch);
        if (!result.best) throw TuningFailedError("every tuning trial failed for " + model);
        const auto& best = result.history[*result.best];
        write_file_atomic(dir / (model + "_history.csv"), history_csv(space, result.history));
        write_json(dir / (model + ".json"), stamp({{"model", model},
                                                   {"objective", best.objective},
                                                   {"config", config_to_json(config_from_point(arch, best.point))}},
                                                  ctx.run.config_hash));
        ctx.log(model + " tuned: validation accuracy " + std::to_string(best.objective));
    }
}

ModelConfig candidate_config(const ActionContext& ctx, const std::string& model) {
    const fs::path tuned = ctx.run_dir / run_files::configs_dir / (model + ".json");
    if (fs::exists(tuned)) return config_from_json(parse_architecture(model), read_json(tuned).at("config"));
    return preset_for(ctx.settings, model);
}

void retraining_train_candidates(ActionContext& ctx) {
    const auto data = load_prepared(ctx.run_dir);
    for (const auto& model : candidate_models(ctx.settings)) {
        const fs::path dir = ctx.run_dir / run_files::candidates_dir / model;
        if (fs::exists(dir / "weights.bin")) continue;  // finished before a restart
        const auto cfg = candidate_config(ctx, model);
        ctx.log("training " + describe_config(cfg));
        const auto result = train_on_dataset(data.train, data.vocab, job_for(ctx.settings, cfg, model), ctx.run.config_hash);
        fs::create_directories(dir);
        write_file_atomic(dir / "history.csv", training_history_csv(result.history));
        save_weights(result.weights, dir / "weights.bin");
    }
}

void retraining_evaluate(ActionContext& ctx) {
    const auto data = load_prepared(ctx.run_dir);
    for (const auto& model : candidate_models(ctx.settings)) {
        const fs::path dir = ctx.run_dir / run_files::candidates_dir / model;
        const auto outcome = evaluate_weights(load_weights(dir / "weights.bin"), data.vocab, data.test, ctx.settings.beta);
        auto j = to_json(outcome.report);
        j["skipped_unknown_class"] = outcome.skipped_unknown_class;
        write_json(dir / "eval.json", stamp(j, ctx.run.config_hash));
        ctx.log(model + " test accuracy " + std::to_string(outcome.report.accuracy));
    }
}

void retraining_ab_test(ActionContext& ctx) {
    const auto models = candidate_models(ctx.settings);
    const fs::path verdict_path = ctx.run_dir / run_files::verdict;
    if (models.size() < 2) {
        write_json(verdict_path, stamp({{"overall_winner", models.front()}, {"note", "single candidate, no A/B test"}},
                                       ctx.run.config_hash));
        throw StateSkipped("single candidate model");
    }
    const auto data = load_prepared(ctx.run_dir);
    // Upsampled duplicates would straddle folds.
    std::vector<RawRecord> originals;
    for (const auto& r : data.train.records()) {
        if (!r.upsampled) originals.push_back(r);
    }
    std::vector<std::pair<std::string, ModelConfig>> configs;
    for (const auto& m : models) configs.emplace_back(m, candidate_config(ctx, m));
    const auto outcome = run_abtest(Dataset(std::move(originals)), data.vocab, configs, ab_options(ctx.settings));
    auto verdict = verdict_json(outcome.report);
    verdict["excluded_models"] = outcome.excluded_models;
    write_file_atomic(ctx.run_dir / run_files::ab_report, report_csv(outcome.report));
    write_json(verdict_path, stamp(verdict, ctx.run.config_hash));
    ctx.log("overall winner " + verdict.at("overall_winner").get<std::string>());
}

void retraining_register_candidate(ActionContext& ctx) {
    const fs::path marker = ctx.run_dir / run_files::registered;
    auto existing = ctx.registry.find_by_source_run(ctx.run.run_id);
    if (!existing) {
        const auto winner = read_json(ctx.run_dir / run_files::verdict).at("overall_winner").get<std::string>();
        const fs::path cand = ctx.run_dir / run_files::candidates_dir / winner;
        const fs::path prepared = ctx.run_dir / run_files::prepared_dir;
        RegisterRequest req;
        req.weights = cand / "weights.bin";
        req.vocab = prepared / "vocab.tsv";
        req.eval_report = cand / "eval.json";
        req.verdict = ctx.run_dir / run_files::verdict;
        req.reference = read_json(prepared / "reference.json");
        req.declared_vocab_hash = read_json(prepared / "prep_report.json").at("vocab_hash").get<std::string>();
        req.data_hash = read_json(ctx.run_dir / run_files::snapshot).at("data_hash").get<std::string>();
        req.seed = ctx.settings.seed;
        req.source_run = ctx.run.run_id;
        existing = ctx.registry.register_model(req);
    }
    write_json(marker, {{"version", existing->version}, {"model", existing->model}, {"weights_hash", existing->weights_hash}});
    ctx.log("registered " + existing->model + " as v" + std::to_string(existing->version));
}

// The A/B winner registered by this run is promoted.
void retraining_promote_if_winner(ActionContext& ctx) {
    const fs::path record = ctx.run_dir / run_files::promotion;
    if (fs::exists(record)) return;  // replay: a later run may have moved ACTIVE on since
    const int version = read_json(ctx.run_dir / run_files::registered).at("version").get<int>();
    const auto previous = ctx.registry.active_version();
    if (previous != version) ctx.registry.promote(version);
    json j = {{"version", version}};
    j["previous"] = previous && *previous != version ? json(*previous) : json(nullptr);
    write_json(record, j);
    ctx.log("v" + std::to_string(version) + " is active");
}

}  // namespace

ActionTable builtin_actions() {
    ActionTable t;
    t.add("inference.validate_input", inference_validate_input);
    t.add("inference.preprocess", inference_preprocess);
    t.add("inference.load_active_model", inference_load_active_model);
    t.add("inference.predict", inference_predict);
    t.add("inference.write_results", inference_write_results);
    t.add("retraining.validate_input", retraining_validate_input);
    t.add("retraining.preprocess", retraining_preprocess);
    t.add("retraining.tune_or_load_config", retraining_tune_or_load_config);
    t.add("retraining.train_candidates", retraining_train_candidates);
    t.add("retraining.evaluate", retraining_evaluate);
    t.add("retraining.ab_test", retraining_ab_test);
    t.add("retraining.register_candidate", retraining_register_candidate);
    t.add("retraining.promote_if_winner", retraining_promote_if_winner);
    return t;
}

}  // namespace hscls
