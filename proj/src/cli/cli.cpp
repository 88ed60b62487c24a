#include "hscls/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <deque>
#include <functional>
#include <memory>
#include <thread>
#include <optional>
#include <tuple>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hscls/corpus.hpp"
#include "hscls/eval.hpp"
#include "hscls/pipeline/actions.hpp"
#include "hscls/pipeline/drift.hpp"
#include "hscls/pipeline/orchestrator.hpp"
#include "hscls/pipeline/registry.hpp"
#include "hscls/pipeline/watcher.hpp"
#include "hscls/settings.hpp"
#include "hscls/tuner.hpp"
#include "hscls/version.hpp"
#include "hscls/weights_io.hpp"
#include "hscls/workflow.hpp"

namespace hscls {

namespace {

using nlohmann::json;

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

// Options that override a Settings key. Values are kept as text and handed to
// apply(), which does the parsing, so a flag and an hscls.toml line behave the
// same.
class SettingFlags {
public:
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        values_.emplace_back();
        auto* opt = app->add_option(flag, values_.back(), help);
        bound_.emplace_back(opt, key, &values_.back());
    }

    KeyValues collect() const {
        KeyValues kv;
        for (const auto& [opt, key, value] : bound_) {
            if (opt->count() > 0) kv[key] = *value;
        }
        return kv;
    }

private:
    std::deque<std::string> values_;
    std::vector<std::tuple<CLI::Option*, std::string, std::string*>> bound_;
};

json read_json_file(const fs::path& p) {
    if (!fs::exists(p)) throw std::runtime_error("missing file: " + p.string());
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw std::runtime_error(p.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_file_atomic(p, j.dump(2) + "\n");
}

void write_text_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_file_atomic(p, text);
}

fs::path sibling_vocab(const fs::path& file) { return file.parent_path() / "vocab.tsv"; }

std::string print_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    Workspace ws;
    Settings settings;
    std::string cfg_hash;
};

// ---- commands -------------------------------------------------------------------

struct SynthArgs {
    fs::path out = "corpus.csv";
    std::size_t classes = 10;
    std::size_t per_class = 200;
    double noise_fraction = 0.2;
};

int cmd_synth(Context& c, const SynthArgs& a) {
    SyntheticCorpusSpec spec;
    spec.n_classes = a.classes;
    spec.per_class = a.per_class;
    spec.noise_fraction = a.noise_fraction;
    spec.seed = c.settings.seed;
    const auto data = make_synthetic_corpus(spec);
    write_corpus_csv(a.out, data);
    c.out << "wrote " << data.size() << " records in " << a.classes << " classes to " << a.out.string() << "\n";
    return kExitOk;
}

struct PrepareArgs {
    fs::path input;
    fs::path out = "prepared";
};

int cmd_prepare(Context& c, const PrepareArgs& a) {
    const auto raw = read_corpus_csv(a.input);
    const auto prep = prepare_corpus(raw, prep_options(c.settings));
    write_prepared(prep, a.out, c.cfg_hash);
    c.out << "per-class counts (raw -> filtered -> train -> upsampled train / test):\n";
    for (const auto& [code, v] : prep.report.at("per_class").items()) {
        c.out << "  " << code << ": " << v.at("raw") << " -> " << v.at("filtered") << " -> " << v.at("train") << " -> "
              << v.at("train_upsampled") << " (+" << v.at("added") << ") / " << v.at("test") << "\n";
    }
    if (prep.report.contains("warning")) c.err << "warning: " << prep.report["warning"].get<std::string>() << "\n";
    c.out << "wrote train.csv, test.csv, vocab.tsv, prep_report.json to " << a.out.string() << "\n";
    return kExitOk;
}

struct TrainArgs {
    fs::path input;
    std::string model = "text_cnn";
    std::optional<std::string> preset;
    std::optional<fs::path> config;
    std::optional<fs::path> vocab;
    fs::path out = "model";
};

void print_plan(Context& c, const ModelConfig& cfg, std::size_t n_classes) {
    c.out << "model: " << describe_config(cfg) << "\n";
    if (const auto* d = std::get_if<DnnConfig>(&cfg)) {
        const auto plan = dnn_layer_plan(*d);
        c.out << "layer plan:";
        for (auto w : plan) c.out << " " << w;
        c.out << " -> " << n_classes << "\n";
        for (auto w : plan) {
            if (w < n_classes) {
                c.err << "warning: a hidden layer of width " << w << " is narrower than the " << n_classes
                      << " output classes\n";
                break;
            }
        }
    }
}

int cmd_train(Context& c, const TrainArgs& a) {
    const auto arch = parse_architecture(a.model);
    const auto cfg = resolve_model_config(arch, a.preset, a.config);
    const auto train_set = read_corpus_csv(a.input);
    const fs::path vocab_path = a.vocab.value_or(sibling_vocab(a.input));
    const auto vocab = Vocabulary::load(vocab_path);
    print_plan(c, cfg, train_set.classes().size());

    TrainJob job;
    job.config = cfg;
    job.max_len = c.settings.max_len;
    job.train = train_config(c.settings);
    job.valid_fraction = c.settings.valid_fraction;
    const auto result = train_on_dataset(train_set, vocab, job, c.cfg_hash);
    for (const auto& h : result.history) {
        c.err << "epoch " << h.epoch << " loss " << print_double(h.train_loss);
        if (!std::isnan(h.valid_accuracy)) c.err << " valid_acc " << print_double(h.valid_accuracy);
        c.err << "\n";
    }
    fs::create_directories(a.out);
    save_weights(result.weights, a.out / "weights.bin");
    write_text_file(a.out / "history.csv", training_history_csv(result.history));
    vocab.save(a.out / "vocab.tsv");
    c.out << "weights " << (a.out / "weights.bin").string() << " hash " << weights_hash(result.weights) << "\n";
    return kExitOk;
}

struct TuneArgs {
    fs::path input;
    std::string model = "text_cnn";
    std::optional<fs::path> vocab;
    fs::path out = "tune";
};

int cmd_tune(Context& c, const TuneArgs& a) {
    if (c.settings.tune_budget < c.settings.tune_n_init) {
        throw UsageError("--budget (" + std::to_string(c.settings.tune_budget) + ") must be at least --n-init (" +
                         std::to_string(c.settings.tune_n_init) + ")");
    }
    if (c.settings.tune_n_init < 2) throw UsageError("--n-init must be at least 2");
    const auto arch = parse_architecture(a.model);
    const auto train_set = read_corpus_csv(a.input);
    const auto vocab = Vocabulary::load(a.vocab.value_or(sibling_vocab(a.input)));
    const auto space = space_for(arch);
    const auto result = tune_model(train_set, vocab, arch, c.settings, c.cfg_hash, [&](const Trial& t) {
        c.err << "trial " << t.index << (t.status == TrialStatus::done ? " objective " + print_double(t.objective)
                                                                       : " failed: " + t.error)
              << "\n";
    });
    if (!result.best) throw TuningFailedError("every trial failed");
    const auto& best = result.history[*result.best];
    fs::create_directories(a.out);
    write_text_file(a.out / "tune_history.csv", history_csv(space, result.history));
    json point = json::object();
    for (const auto& [k, v] : best.point) point[k] = v;
    write_json_file(a.out / "best_config.json", stamp({{"model", a.model},
                                                       {"objective", best.objective},
                                                       {"trial", best.index},
                                                       {"point", point},
                                                       {"config", config_to_json(config_from_point(arch, best.point))}},
                                                      c.cfg_hash));
    c.out << "best trial " << best.index << " objective " << print_double(best.objective) << "\n";
    c.out << describe_config(config_from_point(arch, best.point)) << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    fs::path input;
    fs::path weights;
    std::optional<fs::path> vocab;
    fs::path out = "eval.json";
};

int cmd_evaluate(Context& c, const EvaluateArgs& a) {
    const auto weights = load_weights(a.weights);
    const auto vocab = Vocabulary::load(a.vocab.value_or(sibling_vocab(a.weights)));
    const auto data = read_corpus_csv(a.input);
    const auto outcome = evaluate_weights(weights, vocab, data, c.settings.beta);
    auto j = to_json(outcome.report);
    j["skipped_unknown_class"] = outcome.skipped_unknown_class;
    write_json_file(a.out, stamp(j, c.cfg_hash));
    if (outcome.skipped_unknown_class > 0) {
        c.err << "warning: " << outcome.skipped_unknown_class << " records have classes the model never saw\n";
    }
    c.out << "accuracy " << print_double(outcome.report.accuracy) << "\n" << band_table_csv(outcome.report.bands);
    return kExitOk;
}

struct AbtestArgs {
    fs::path input;
    std::optional<fs::path> vocab;
    fs::path out = "abtest";
};

int cmd_abtest(Context& c, const AbtestArgs& a) {
    const auto names = candidate_models(c.settings);
    if (names.size() < 2) throw UsageError("--models needs at least two distinct models");
    const auto data = read_corpus_csv(a.input);
    const auto vocab = Vocabulary::load(a.vocab.value_or(sibling_vocab(a.input)));
    std::vector<RawRecord> originals;
    for (const auto& r : data.records()) {
        if (!r.upsampled) originals.push_back(r);
    }
    std::vector<std::pair<std::string, ModelConfig>> models;
    for (const auto& n : names) models.emplace_back(n, preset_for(c.settings, n));
    const auto opts = ab_options(c.settings);
    const auto outcome = run_abtest(Dataset(std::move(originals)), vocab, models, opts);
    for (const auto& e : outcome.excluded_models) c.err << "excluded " << e << "\n";
    auto verdict = verdict_json(outcome.report);
    verdict["excluded_models"] = outcome.excluded_models;
    verdict["k"] = opts.k;
    fs::create_directories(a.out);
    write_text_file(a.out / "ab_report.csv", report_csv(outcome.report));
    write_json_file(a.out / "verdict.json", stamp(verdict, c.cfg_hash));
    c.out << "overall winner " << verdict.at("overall_winner").get<std::string>() << "\n";
    return kExitOk;
}

struct InferArgs {
    fs::path input;
    std::optional<fs::path> weights;
    std::optional<fs::path> vocab;
    bool use_active = false;
    fs::path out = "predictions.csv";
};

int cmd_infer(Context& c, const InferArgs& a) {
    if (a.use_active == a.weights.has_value()) throw UsageError("give exactly one of --weights or --use-active");
    fs::path weights_path, vocab_path;
    if (a.use_active) {
        Registry reg(c.ws.registry_dir());
        const auto entry = reg.active();
        if (!entry) throw std::runtime_error("no active model in the registry at " + c.ws.registry_dir().string());
        weights_path = entry->weights_path();
        vocab_path = entry->vocab_path();
        c.err << "using registry v" << entry->version << " (" << entry->model << ")\n";
    } else {
        weights_path = *a.weights;
        vocab_path = a.vocab.value_or(sibling_vocab(*a.weights));
    }
    const auto weights = load_weights(weights_path);
    const auto vocab = Vocabulary::load(vocab_path);
    const auto records = read_inference_csv(a.input);
    const auto seqs = encode_inference(records, vocab, weights.dims.max_len);
    const auto preds = predict(weights, seqs, vocab.hash(), band_thresholds(c.settings));
    write_text_file(a.out, predictions_csv(records, preds, weights.class_list));
    c.out << "wrote " << preds.size() << " predictions to " << a.out.string() << "\n";
    return kExitOk;
}

struct PipelineArgs {
    std::string run_id;
    fs::path event_file;
    bool once = false;
    double duration = 0.0;
};

std::unique_ptr<Orchestrator> make_orchestrator(Context& c) {
    c.ws.init();
    auto orch = std::make_unique<Orchestrator>(c.ws, c.settings, builtin_actions());
    orch->log = [&c](const std::string& m) { c.err << m << "\n"; };
    return orch;
}

void print_run(Context& c, const PipelineRun& run) { c.out << to_json(run).dump(2) << "\n"; }

int cmd_pipeline_init(Context& c) {
    c.ws.init();
    c.out << "initialized workspace " << c.ws.root().string() << "\n";
    return kExitOk;
}

int cmd_pipeline_status(Context& c, const PipelineArgs& a) {
    const auto run = load_run(c.ws.run_dir(a.run_id));
    if (!run) throw std::runtime_error("no run '" + a.run_id + "' in " + c.ws.runs_dir().string());
    print_run(c, *run);
    return kExitOk;
}

int cmd_pipeline_emit(Context& c, const PipelineArgs& a) {
    Event ev;
    try {
        ev = event_from_json(read_json_file(a.event_file));
    } catch (const EventFormatError& e) {
        throw std::runtime_error(a.event_file.string() + ": " + e.what());
    }
    for (auto& p : ev.payload) {
        // Relative payloads are resolved against the event file's directory.
        fs::path path(p);
        if (path.is_relative()) path = fs::absolute(a.event_file).parent_path() / path;
        if (!fs::exists(path)) throw std::runtime_error("payload " + path.string() + " does not exist");
        p = fs::weakly_canonical(path).string();
    }
    auto orch = make_orchestrator(c);
    if (ev.event_id.empty()) ev.event_id = next_event_id(c.ws);
    if (ev.timestamp.empty()) ev.timestamp = utc_timestamp();
    ev.source = EventSource::cli;
    c.err << "event " << ev.event_id << " -> run " << run_id_for(ev) << "\n";
    const auto run = orch->submit(ev);
    print_run(c, run);
    return run.status == RunStatus::succeeded ? kExitOk : kExitFailure;
}

int cmd_pipeline_resume(Context& c) {
    auto orch = make_orchestrator(c);
    const auto runs = orch->resume_incomplete();
    bool ok = true;
    for (const auto& r : runs) {
        c.out << r.run_id << " " << to_string(r.status) << "\n";
        ok = ok && r.status == RunStatus::succeeded;
    }
    if (runs.empty()) c.out << "no incomplete runs\n";
    return ok ? kExitOk : kExitFailure;
}

int cmd_pipeline_start(Context& c, const PipelineArgs& a) {
    auto orch = make_orchestrator(c);
    if (a.once) {
        // Stability needs two sightings of each file.
        for (const auto& r : orch->resume_incomplete()) c.out << r.run_id << " " << to_string(r.status) << "\n";
        orch->poll_once();
        real_sleep(c.settings.poll_seconds);
        for (const auto& r : orch->poll_once()) c.out << r.run_id << " " << to_string(r.status) << "\n";
        return kExitOk;
    }
    g_stop.store(false);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::atomic<bool> stop{false};
    std::thread timer([&] {
        const auto start = std::chrono::steady_clock::now();
        while (!g_stop.load()) {
            if (a.duration > 0.0 &&
                std::chrono::steady_clock::now() - start > std::chrono::duration<double>(a.duration)) {
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
        stop.store(true);
    });
    c.err << "watching " << c.ws.events_dir().string() << " every " << c.settings.poll_seconds << " s\n";
    orch->serve(stop);
    g_stop.store(true);
    timer.join();
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
    return kExitOk;
}

struct RegistryArgs {
    int version = 0;
    bool as_json = false;
    fs::path weights;
    std::optional<fs::path> vocab;
    std::optional<fs::path> eval_report;
    std::optional<fs::path> verdict;
    std::string data_hash;
};

json entry_json(const RegistryEntry& e) {
    return {{"version", e.version},         {"status", to_string(e.status)}, {"model", e.model},
            {"weights_hash", e.weights_hash}, {"vocab_hash", e.vocab_hash},    {"data_hash", e.data_hash},
            {"seed", e.seed},               {"source_run", e.source_run},    {"created", e.created},
            {"dir", e.dir.string()}};
}

int cmd_registry_list(Context& c, const RegistryArgs& a) {
    Registry reg(c.ws.registry_dir());
    const auto entries = reg.list();
    if (a.as_json) {
        json arr = json::array();
        for (const auto& e : entries) arr.push_back(entry_json(e));
        c.out << arr.dump(2) << "\n";
        return kExitOk;
    }
    for (const auto& e : entries) {
        c.out << "v" << e.version << "\t" << to_string(e.status) << "\t" << e.model << "\t" << e.weights_hash << "\t"
              << (e.source_run.empty() ? "-" : e.source_run) << "\n";
    }
    return kExitOk;
}

int cmd_registry_promote(Context& c, const RegistryArgs& a) {
    Registry reg(c.ws.registry_dir());
    reg.promote(a.version);
    c.out << "active v" << a.version << "\n";
    return kExitOk;
}

int cmd_registry_show_active(Context& c, const RegistryArgs& a) {
    Registry reg(c.ws.registry_dir());
    const auto entry = reg.active();
    if (!entry) throw std::runtime_error("no active model");
    if (a.as_json) {
        c.out << entry_json(*entry).dump(2) << "\n";
    } else {
        c.out << entry->version << "\n";
    }
    return kExitOk;
}

int cmd_registry_register(Context& c, const RegistryArgs& a) {
    Registry reg(c.ws.registry_dir());
    RegisterRequest req;
    req.weights = a.weights;
    req.vocab = a.vocab.value_or(sibling_vocab(a.weights));
    req.eval_report = a.eval_report;
    req.verdict = a.verdict;
    req.data_hash = a.data_hash;
    req.seed = c.settings.seed;
    const auto e = reg.register_model(req);
    c.out << "registered v" << e.version << " (" << e.model << ", candidate)\n";
    return kExitOk;
}

struct ReportArgs {
    std::optional<fs::path> eval;
    std::optional<std::string> run;
    std::string format = "csv";
    fs::path out = ".";
};

void emit_report(Context& c, const EvalReport& r, const std::string& format, const fs::path& dir,
                 const std::string& prefix) {
    fs::create_directories(dir);
    if (format == "csv") {
        write_text_file(dir / (prefix + "per_class.csv"), per_class_csv(r.metrics, r.class_names));
        const auto bands = band_table_csv(r.bands);
        write_text_file(dir / (prefix + "bands.csv"), bands);
        c.out << bands;
        return;
    }
    for (const char* metric : {"precision", "recall", "f_beta"}) {
        const fs::path p = dir / (prefix + "bands_" + metric + ".svg");
        write_text_file(p, band_chart_svg(band_counts(r.bands, metric), r.bands.thresholds,
                                          prefix + std::string(metric) + " by band (classes per band)"));
        c.out << p.string() << "\n";
    }
}

int cmd_report(Context& c, const ReportArgs& a) {
    if (a.eval.has_value() == a.run.has_value()) throw UsageError("give exactly one of --eval or --run");
    if (a.format != "csv" && a.format != "svg") throw UsageError("--format must be csv or svg");
    if (a.eval) {
        emit_report(c, eval_report_from_json(read_json_file(*a.eval)), a.format, a.out, "");
        return kExitOk;
    }
    const fs::path run_dir = c.ws.run_dir(*a.run);
    if (!load_run(run_dir)) throw std::runtime_error("no run '" + *a.run + "'");
    const fs::path cands = run_dir / run_files::candidates_dir;
    std::vector<fs::path> evals;
    if (fs::exists(cands)) {
        for (const auto& e : fs::directory_iterator(cands)) {
            if (fs::exists(e.path() / "eval.json")) evals.push_back(e.path() / "eval.json");
        }
    }
    if (evals.empty()) throw std::runtime_error("run " + *a.run + " has no evaluation report");
    std::sort(evals.begin(), evals.end());
    for (const auto& p : evals) {
        const std::string model = p.parent_path().filename().string();
        c.out << "# " << model << "\n";
        emit_report(c, eval_report_from_json(read_json_file(p)), a.format, a.out, model + "_");
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"HS-code text classification toolkit and local pipeline orchestrator", "hscls"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<fs::path> workspace;
    std::vector<std::string> overrides;
    SettingFlags flags;
    app.add_option("--workspace", workspace, "workspace root (default: $HSCLS_WORKSPACE or .)");
    app.add_option("--set", overrides, "override any setting: --set key=value (repeatable)");
    flags.add(&app, "--seed", "seed", "seed for every random stream");

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    s_synth->add_option("--out", synth.out, "output CSV")->capture_default_str();
    s_synth->add_option("--classes", synth.classes)->capture_default_str();
    s_synth->add_option("--per-class", synth.per_class)->capture_default_str();
    s_synth->add_option("--noise-fraction", synth.noise_fraction)->capture_default_str();

    PrepareArgs prepare;
    auto* s_prepare = app.add_subcommand("prepare", "filter, split, upsample and build the vocabulary");
    s_prepare->add_option("input", prepare.input, "corpus CSV")->required();
    s_prepare->add_option("--out", prepare.out, "output directory")->capture_default_str();
    flags.add(s_prepare, "--min-assurance", "min_assurance", "lowest assurance level kept");
    flags.add(s_prepare, "--test-fraction", "test_fraction", "per-class test share");
    flags.add(s_prepare, "--upsample", "upsample", "off, mean or median");
    flags.add(s_prepare, "--minority-threshold", "minority_threshold", "class share below which a class is upsampled");
    flags.add(s_prepare, "--vocab-size", "vocab_size", "vocabulary size including PAD and OOV");

    TrainArgs train;
    auto* s_train = app.add_subcommand("train", "train a model on a prepared training CSV");
    s_train->add_option("input", train.input, "prepared train.csv")->required();
    s_train->add_option("--model", train.model, "dnn or text_cnn")->capture_default_str();
    s_train->add_option("--preset", train.preset, "paper_final, paper_base (dnn) or prose_345 (text_cnn)");
    s_train->add_option("--config", train.config, "JSON hyperparameter file (wins over --preset)");
    s_train->add_option("--vocab", train.vocab, "vocabulary (default: vocab.tsv next to the input)");
    s_train->add_option("--out", train.out, "output directory")->capture_default_str();
    for (auto* sub : {s_train}) {
        flags.add(sub, "--epochs", "epochs", "training epochs");
        flags.add(sub, "--patience", "patience", "early-stopping patience");
        flags.add(sub, "--valid-fraction", "valid_fraction", "held-out share for early stopping");
    }

    TuneArgs tune_args;
    auto* s_tune = app.add_subcommand("tune", "Bayesian hyperparameter search");
    s_tune->add_option("input", tune_args.input, "prepared train.csv")->required();
    s_tune->add_option("--model", tune_args.model, "dnn or text_cnn")->capture_default_str();
    s_tune->add_option("--vocab", tune_args.vocab, "vocabulary (default: vocab.tsv next to the input)");
    s_tune->add_option("--out", tune_args.out, "output directory")->capture_default_str();
    flags.add(s_tune, "--budget", "tune_budget", "total trials");
    flags.add(s_tune, "--n-init", "tune_n_init", "initial Latin-hypercube trials");
    flags.add(s_tune, "--epochs", "tune_epochs", "epochs per trial");

    EvaluateArgs evaluate;
    auto* s_eval = app.add_subcommand("evaluate", "per-class metrics and confidence bands on a labeled CSV");
    s_eval->add_option("input", evaluate.input, "labeled CSV")->required();
    s_eval->add_option("--weights", evaluate.weights, "weights file")->required();
    s_eval->add_option("--vocab", evaluate.vocab, "vocabulary (default: vocab.tsv next to the weights)");
    s_eval->add_option("--out", evaluate.out, "evaluation report JSON")->capture_default_str();

    AbtestArgs abtest;
    auto* s_ab = app.add_subcommand("abtest", "k-fold A/B comparison with per-class ANOVA");
    s_ab->add_option("input", abtest.input, "prepared train.csv")->required();
    s_ab->add_option("--vocab", abtest.vocab, "vocabulary (default: vocab.tsv next to the input)");
    s_ab->add_option("--out", abtest.out, "output directory")->capture_default_str();
    flags.add(s_ab, "--models", "models", "comma-separated model list");
    flags.add(s_ab, "--k", "ab_k", "number of folds");
    flags.add(s_ab, "--metric", "ab_metric", "precision, recall or f_beta");
    flags.add(s_ab, "--statistic", "ab_statistic", "mean or median");
    flags.add(s_ab, "--alpha", "alpha", "significance level");
    flags.add(s_ab, "--epochs", "ab_epochs", "epochs per fold");
    flags.add(s_ab, "--threads", "threads", "parallel folds");

    InferArgs infer;
    auto* s_infer = app.add_subcommand("infer", "batch prediction");
    s_infer->add_option("input", infer.input, "CSV with record_id, short_description, medium_description[, etim]")
        ->required();
    s_infer->add_option("--weights", infer.weights, "weights file");
    s_infer->add_flag("--use-active", infer.use_active, "use the registry's active model");
    s_infer->add_option("--vocab", infer.vocab, "vocabulary (default: vocab.tsv next to the weights)");
    s_infer->add_option("--out", infer.out, "predictions CSV")->capture_default_str();

    // Flags shared by several model commands.
    for (auto* sub : {s_train, s_tune, s_ab, s_infer, s_eval}) {
        flags.add(sub, "--max-len", "max_len", "tokens per record");
        flags.add(sub, "--batch-size", "batch_size", "mini-batch size");
        flags.add(sub, "--beta", "beta", "F-beta weight");
    }

    PipelineArgs pipe;
    auto* s_pipe = app.add_subcommand("pipeline", "event-driven inference and retraining pipelines");
    s_pipe->require_subcommand(1);
    auto* p_init = s_pipe->add_subcommand("init", "create the workspace layout");
    auto* p_start = s_pipe->add_subcommand("start", "run watchers and executors in the foreground");
    p_start->add_flag("--once", pipe.once, "resume, poll twice and exit");
    p_start->add_option("--duration", pipe.duration, "stop after this many seconds (0: until interrupted)");
    flags.add(p_start, "--poll-seconds", "poll_seconds", "watcher poll interval");
    auto* p_status = s_pipe->add_subcommand("status", "print a run record");
    p_status->add_option("run_id", pipe.run_id)->required();
    auto* p_emit = s_pipe->add_subcommand("emit-event", "execute an event file now, bypassing the watcher");
    p_emit->add_option("event", pipe.event_file, "event JSON")->required();
    auto* p_resume = s_pipe->add_subcommand("resume", "finish every incomplete run");

    RegistryArgs reg;
    auto* s_reg = app.add_subcommand("registry", "model registry");
    s_reg->require_subcommand(1);
    auto* r_list = s_reg->add_subcommand("list", "list versions");
    r_list->add_flag("--json", reg.as_json);
    auto* r_promote = s_reg->add_subcommand("promote", "make a version active");
    r_promote->add_option("version", reg.version)->required();
    auto* r_show = s_reg->add_subcommand("show-active", "print the active version");
    r_show->add_flag("--json", reg.as_json);
    auto* r_register = s_reg->add_subcommand("register", "add a weights file as a candidate");
    r_register->add_option("--weights", reg.weights)->required();
    r_register->add_option("--vocab", reg.vocab, "vocabulary (default: vocab.tsv next to the weights)");
    r_register->add_option("--eval", reg.eval_report, "evaluation report JSON");
    r_register->add_option("--verdict", reg.verdict, "A/B verdict JSON");
    r_register->add_option("--data-hash", reg.data_hash, "hash of the training snapshot");

    ReportArgs report;
    auto* s_report = app.add_subcommand("report", "band tables (csv) or band charts (svg)");
    s_report->add_option("--eval", report.eval, "evaluation report JSON");
    s_report->add_option("--run", report.run, "retraining run id");
    s_report->add_option("--format", report.format, "csv or svg")->capture_default_str();
    s_report->add_option("--out", report.out, "output directory")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!workspace) {
            const char* env = std::getenv("HSCLS_WORKSPACE");
            workspace = fs::path(env && *env ? env : ".");
        }
        Context c{out, err, Workspace(*workspace), {}, {}};
        // defaults < hscls.toml < environment < flags
        try {
            c.settings = c.ws.load_settings();
            apply(c.settings, settings_from_environment(), "environment");
            KeyValues kv;
            for (const auto& o : overrides) {
                const auto eq = o.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + o + "'");
                kv[o.substr(0, eq)] = o.substr(eq + 1);
            }
            for (const auto& [k, v] : flags.collect()) kv[k] = v;
            apply(c.settings, kv, "command line");
            prep_options(c.settings);
            parse_metric(c.settings.ab_metric);
            parse_statistic(c.settings.ab_statistic);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        c.cfg_hash = settings_hash(c.settings);
        err << "seed " << c.settings.seed << "\n";

        if (*s_synth) return cmd_synth(c, synth);
        if (*s_prepare) return cmd_prepare(c, prepare);
        if (*s_train) return cmd_train(c, train);
        if (*s_tune) return cmd_tune(c, tune_args);
        if (*s_eval) return cmd_evaluate(c, evaluate);
        if (*s_ab) return cmd_abtest(c, abtest);
        if (*s_infer) return cmd_infer(c, infer);
        if (*s_pipe) {
            if (*p_init) return cmd_pipeline_init(c);
            if (*p_start) return cmd_pipeline_start(c, pipe);
            if (*p_status) return cmd_pipeline_status(c, pipe);
            if (*p_emit) return cmd_pipeline_emit(c, pipe);
            if (*p_resume) return cmd_pipeline_resume(c);
        }
        if (*s_reg) {
            if (*r_list) return cmd_registry_list(c, reg);
            if (*r_promote) return cmd_registry_promote(c, reg);
            if (*r_show) return cmd_registry_show_active(c, reg);
            if (*r_register) return cmd_registry_register(c, reg);
        }
        if (*s_report) return cmd_report(c, report);
        throw UsageError("no command given");
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const CorpusFormatError& e) {
        err << "error: " << e.what() << "\n";
        for (const auto& issue : e.issues()) err << "  line " << issue.line << ": " << issue.message << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace hscls
