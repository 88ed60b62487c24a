#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hscls/cli.hpp"
#include "hscls/corpus.hpp"
#include "hscls/fs.hpp"
#include "hscls/models.hpp"
#include "support.hpp"

using namespace hscls;
using hscls::test::TempDir;

namespace {

struct Result {
    int code;
    std::string out, err;
};

// Runs the CLI with --workspace pinned to `ws` so the tests never touch the
// working directory.
Result cli(const fs::path& ws, std::vector<std::string> args) {
    args.insert(args.begin(), {"--workspace", ws.string()});
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

void write_text(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << s;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Drops the wall_seconds column, the only field that varies between reruns.
std::string without_timing(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        f.erase(f.begin() + 9);
        for (const auto& x : f) out += x + ",";
        out += "\n";
    }
    return out;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// synth + prepare into dir/prepared; returns the prepared directory.
fs::path prepared_corpus(const fs::path& dir, const std::string& upsample = "median") {
    const auto corpus = dir / "corpus.csv";
    auto r = cli(dir, {"--seed", "3", "synth", "--out", corpus.string(), "--classes", "3", "--per-class", "30"});
    REQUIRE(r.code == 0);
    r = cli(dir, {"prepare", corpus.string(), "--out", (dir / "prepared").string(), "--min-assurance", "3",
                  "--upsample", upsample});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return dir / "prepared";
}

fs::path small_model(const fs::path& dir, const fs::path& prepared) {
    const auto r = cli(dir, {"train", (prepared / "train.csv").string(), "--model", "dnn", "--preset", "paper_base",
                             "--epochs", "2", "--max-len", "12", "--out", (dir / "model").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return dir / "model";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 2") {
    TempDir dir;
    const auto ws = dir.path();
    CHECK(cli(ws, {}).code == kExitUsage);
    CHECK(cli(ws, {"frobnicate"}).code == kExitUsage);
    CHECK(cli(ws, {"tune", "x.csv", "--budget", "5", "--n-init", "8"}).code == kExitUsage);
    CHECK(cli(ws, {"abtest", "x.csv", "--models", "dnn"}).code == kExitUsage);
    CHECK(cli(ws, {"abtest", "x.csv", "--models", "dnn,dnn"}).code == kExitUsage);
    CHECK(cli(ws, {"report"}).code == kExitUsage);
    CHECK(cli(ws, {"report", "--eval", "a.json", "--run", "r"}).code == kExitUsage);
    CHECK(cli(ws, {"report", "--eval", "a.json", "--format", "pdf"}).code == kExitUsage);
    CHECK(cli(ws, {"infer", "x.csv"}).code == kExitUsage);
    CHECK(cli(ws, {"infer", "x.csv", "--weights", "w.bin", "--use-active"}).code == kExitUsage);
    CHECK(cli(ws, {"prepare", "x.csv", "--upsample", "sideways"}).code == kExitUsage);
    CHECK(cli(ws, {"--set", "epochs", "synth"}).code == kExitUsage);
    CHECK(cli(ws, {"--set", "no_such_key=1", "synth"}).code == kExitUsage);
    CHECK(cli(ws, {"--version"}).code == kExitOk);
}

TEST_CASE("runtime failures exit with 1") {
    TempDir dir;
    const auto ws = dir.path();
    const auto r = cli(ws, {"pipeline", "status", "run-nonexistent"});
    CHECK(r.code == kExitFailure);
    CHECK(contains(r.err, "run-nonexistent"));
    CHECK(cli(ws, {"train", (ws / "missing.csv").string()}).code == kExitFailure);
    const auto none = cli(ws, {"infer", (ws / "x.csv").string(), "--use-active"});
    CHECK(none.code == kExitFailure);
    CHECK(contains(none.err, "no active model"));
}

TEST_CASE("the resolved seed is printed") {
    TempDir dir;
    const auto r = cli(dir.path(), {"--seed", "77", "synth", "--out", (dir / "c.csv").string(), "--classes", "2",
                                    "--per-class", "5"});
    CHECK(r.code == 0);
    CHECK(contains(r.err, "seed 77"));
}

TEST_CASE("prepare reports malformed rows by line") {
    TempDir dir;
    write_text(dir / "bad.csv",
               "record_id,short_description,medium_description,etim,hs_code,assurance_level\n"
               "r1,relay,relay coil,,853620,4\n"
               "r2,cable,copper cable,,85X449,4\n"
               "r3,fuse,glass fuse,,853610\n");
    const auto r = cli(dir.path(), {"prepare", (dir / "bad.csv").string(), "--out", (dir / "p").string()});
    CHECK(r.code == kExitFailure);
    CHECK(contains(r.err, "line 3"));
    CHECK(contains(r.err, "line 4"));
    CHECK_FALSE(fs::exists(dir / "p" / "train.csv"));
}

TEST_CASE("prepare writes its artifacts; upsample off keeps counts") {
    TempDir dir;
    const auto p = prepared_corpus(dir.path(), "off");
    for (const char* f : {"train.csv", "test.csv", "vocab.tsv", "prep_report.json"}) CHECK(fs::exists(p / f));
    const auto report = nlohmann::json::parse(read_file(p / "prep_report.json"));
    for (const auto& [code, v] : report.at("per_class").items()) {
        CHECK(v.at("added").get<int>() == 0);
        CHECK(v.at("train_upsampled") == v.at("train"));
    }
    const auto train = read_corpus_csv(p / "train.csv");
    for (const auto& r : train.records()) CHECK_FALSE(r.upsampled);
}

TEST_CASE("train prints the model and the DNN layer plan") {
    TempDir dir;
    const auto p = prepared_corpus(dir.path());
    write_text(dir / "dnn.json",
               R"({"initial_neurons": 100, "neuron_pct": 1.0, "neuron_shrink": 0.5, "n_layer_cap": 3,)"
               R"( "embedding_dim": 8, "dropout": 0.1})");
    auto r = cli(dir.path(), {"train", (p / "train.csv").string(), "--model", "dnn", "--config",
                              (dir / "dnn.json").string(), "--epochs", "1", "--max-len", "12", "--out",
                              (dir / "m1").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "layer plan: 100 50 25 -> 3"));
    CHECK(fs::exists(dir / "m1" / "weights.bin"));
    CHECK(fs::exists(dir / "m1" / "vocab.tsv"));
    CHECK(lines(read_file(dir / "m1" / "history.csv")) == 2);

    r = cli(dir.path(), {"train", (p / "train.csv").string(), "--model", "text_cnn", "--preset", "prose_345",
                         "--epochs", "1", "--max-len", "12", "--out", (dir / "m2").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "text_cnn"));
    CHECK(contains(r.out, "\"kernel_sizes\":[3,4,5]"));

    // --config wins over --preset.
    r = cli(dir.path(), {"train", (p / "train.csv").string(), "--model", "dnn", "--preset", "paper_final",
                         "--config", (dir / "dnn.json").string(), "--epochs", "1", "--max-len", "12", "--out",
                         (dir / "m3").string()});
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "layer plan: 100 50 25"));

    CHECK(cli(dir.path(), {"train", (p / "train.csv").string(), "--model", "dnn", "--preset", "prose_999"}).code ==
          kExitFailure);
}

TEST_CASE("tune writes one history row per trial") {
    TempDir dir;
    const auto p = prepared_corpus(dir.path());
    const std::vector<std::string> args{"--seed",  "4",   "tune",     (p / "train.csv").string(),
                                        "--model", "dnn", "--budget", "6",
                                        "--n-init", "4",  "--epochs", "1",
                                        "--max-len", "12", "--out",   (dir / "t1").string()};
    const auto r = cli(dir.path(), args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(lines(read_file(dir / "t1" / "tune_history.csv")) == 7);
    const auto best = nlohmann::json::parse(read_file(dir / "t1" / "best_config.json"));
    const auto cfg = std::get<DnnConfig>(config_from_json(Architecture::dnn, best.at("config")));
    CHECK(cfg.within_search_space());

    auto again = args;
    again.back() = (dir / "t2").string();
    REQUIRE(cli(dir.path(), again).code == 0);
    const auto h1 = read_file(dir / "t1" / "tune_history.csv");
    REQUIRE(contains(h1.substr(0, h1.find('\n')), ",objective,status,wall_seconds,"));
    CHECK(without_timing(h1) == without_timing(read_file(dir / "t2" / "tune_history.csv")));
}

TEST_CASE("evaluate, report and infer") {
    TempDir dir;
    const auto p = prepared_corpus(dir.path());
    const auto m = small_model(dir.path(), p);
    auto r = cli(dir.path(), {"evaluate", (p / "test.csv").string(), "--weights", (m / "weights.bin").string(),
                              "--out", (dir / "eval.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(contains(r.out, "metric,>=90%,80-90%,<80%"));

    r = cli(dir.path(), {"report", "--eval", (dir / "eval.json").string(), "--format", "svg", "--out",
                         (dir / "svg").string()});
    REQUIRE(r.code == 0);
    for (const char* f : {"bands_precision.svg", "bands_recall.svg", "bands_f_beta.svg"}) {
        CHECK(read_file(dir / "svg" / f).rfind("<svg", 0) == 0);
    }
    r = cli(dir.path(), {"report", "--eval", (dir / "eval.json").string(), "--out", (dir / "csv").string()});
    REQUIRE(r.code == 0);
    const auto bands = read_file(dir / "csv" / "bands.csv");
    CHECK(bands.rfind("metric,>=90%,80-90%,<80%\n", 0) == 0);
    CHECK(lines(bands) == 4);
    CHECK(lines(read_file(dir / "csv" / "per_class.csv")) == 4);

    write_text(dir / "empty.csv", "record_id,short_description,medium_description\n");
    r = cli(dir.path(), {"infer", (dir / "empty.csv").string(), "--weights", (m / "weights.bin").string(), "--out",
                         (dir / "empty_pred.csv").string()});
    CHECK(r.code == 0);
    CHECK(lines(read_file(dir / "empty_pred.csv")) == 1);

    write_text(dir / "batch.csv",
               "record_id,short_description,medium_description\nq1,alpha,beta gamma\nq2,\"delta, x\",epsilon\n");
    r = cli(dir.path(), {"infer", (dir / "batch.csv").string(), "--weights", (m / "weights.bin").string(), "--out",
                         (dir / "pred.csv").string()});
    CHECK(r.code == 0);
    const auto preds = read_file(dir / "pred.csv");
    CHECK(lines(preds) == 3);
    CHECK(contains(preds, "\nq1,"));
    CHECK(contains(preds, "\nq2,"));
}

TEST_CASE("registry commands and an emitted inference event") {
    TempDir dir;
    const auto ws = dir.path();
    const auto p = prepared_corpus(ws);
    const auto m = small_model(ws, p);
    CHECK(cli(ws, {"pipeline", "init"}).code == 0);
    CHECK(cli(ws, {"registry", "show-active"}).code == kExitFailure);
    for (int i = 0; i < 2; ++i) {
        const auto r = cli(ws, {"registry", "register", "--weights", (m / "weights.bin").string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(contains(r.out, "registered v" + std::to_string(i + 1)));
    }
    CHECK(cli(ws, {"registry", "promote", "2"}).code == 0);
    auto r = cli(ws, {"registry", "show-active"});
    CHECK(r.code == 0);
    CHECK(r.out == "2\n");
    CHECK(cli(ws, {"registry", "promote", "9"}).code == kExitFailure);
    r = cli(ws, {"registry", "list", "--json"});
    const auto list = nlohmann::json::parse(r.out);
    REQUIRE(list.size() == 2);
    CHECK(list[1].at("status") == "active");

    write_text(ws / "in" / "batch.csv", "record_id,short_description,medium_description\nq1,alpha,beta\n");
    write_text(ws / "in" / "event.json", R"({"kind": "inference_request", "payload": "batch.csv"})");
    r = cli(ws, {"pipeline", "emit-event", (ws / "in" / "event.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto run_id = nlohmann::json::parse(r.out).at("run_id").get<std::string>();
    r = cli(ws, {"pipeline", "status", run_id});
    REQUIRE(r.code == 0);
    const auto status = nlohmann::json::parse(r.out);
    CHECK(status.at("status") == "succeeded");
    CHECK(status.at("states").size() == 5);

    write_text(ws / "in" / "broken.json", R"({"kind": "inference_request", "payload": "nope.csv"})");
    CHECK(cli(ws, {"pipeline", "emit-event", (ws / "in" / "broken.json").string()}).code == kExitFailure);
    CHECK(cli(ws, {"pipeline", "resume"}).code == 0);
}

}  // TEST_SUITE
