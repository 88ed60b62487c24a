#include "hscls/pipeline/machine.hpp"

#include <chrono>
#include <ctime>

#include "hscls/version.hpp"

namespace hscls {

namespace {

StateMachineDef make_machine(std::string name, std::initializer_list<const char*> states, const RetryPolicy& retry) {
    // Action ids are "<machine>.<state>": both machines have a validate_input
    // and a preprocess state, with different actions.
    StateMachineDef def{name, {}};
    for (const char* s : states) def.states.push_back({s, name + "." + s, retry, OnFailure::halt});
    return def;
}

}  // namespace

StateMachineDef define_inference_machine(const RetryPolicy& retry) {
    return make_machine("inference", {"validate_input", "preprocess", "load_active_model", "predict", "write_results"},
                        retry);
}

StateMachineDef define_retraining_machine(const RetryPolicy& retry) {
    return make_machine("retraining",
                        {"validate_input", "preprocess", "tune_or_load_config", "train_candidates", "evaluate",
                         "ab_test", "register_candidate", "promote_if_winner"},
                        retry);
}

void validate_machine(const StateMachineDef& def, const std::set<std::string>& known_actions) {
    if (def.name.empty()) throw MachineDefinitionError("state machine has no name");
    if (def.states.empty()) throw MachineDefinitionError("state machine " + def.name + " has no states");
    std::set<std::string> seen;
    for (const auto& s : def.states) {
        if (!seen.insert(s.name).second) throw MachineDefinitionError("duplicate state name " + s.name);
        if (!known_actions.contains(s.action)) {
            throw MachineDefinitionError("state " + s.name + " uses unknown action '" + s.action + "'");
        }
        if (s.retry.max_attempts == 0) throw MachineDefinitionError("state " + s.name + ": max_attempts must be >= 1");
        if (s.retry.backoff_seconds < 0.0) throw MachineDefinitionError("state " + s.name + ": negative backoff");
    }
}

nlohmann::json to_json(const StateMachineDef& def) {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : def.states) {
        states.push_back({{"name", s.name},
                          {"action", s.action},
                          {"retry", {{"max_attempts", s.retry.max_attempts}, {"backoff_seconds", s.retry.backoff_seconds}}},
                          {"on_failure", s.on_failure == OnFailure::halt ? "halt" : "skip"}});
    }
    return {{"format_version", kMachineFormatVersion}, {"name", def.name}, {"states", states}};
}

StateMachineDef machine_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kMachineFormatVersion) {
            throw MachineDefinitionError("unsupported state-machine format_version " + std::to_string(version));
        }
        StateMachineDef def;
        def.name = j.at("name").get<std::string>();
        for (const auto& s : j.at("states")) {
            StateDef st;
            st.name = s.at("name").get<std::string>();
            st.action = s.value("action", st.name);
            if (s.contains("retry")) {
                st.retry.max_attempts = s["retry"].value("max_attempts", st.retry.max_attempts);
                st.retry.backoff_seconds = s["retry"].value("backoff_seconds", st.retry.backoff_seconds);
            }
            const std::string of = s.value("on_failure", "halt");
            if (of != "halt" && of != "skip") throw MachineDefinitionError("state " + st.name + ": on_failure must be halt or skip");
            st.on_failure = of == "halt" ? OnFailure::halt : OnFailure::skip;
            def.states.push_back(std::move(st));
        }
        return def;
    } catch (const nlohmann::json::exception& e) {
        throw MachineDefinitionError(std::string("malformed state-machine definition: ") + e.what());
    }
}

std::string serialize_machine(const StateMachineDef& def) { return to_json(def).dump(2) + "\n"; }

StateMachineDef parse_machine(std::string_view text, const std::set<std::string>& known_actions) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MachineDefinitionError(std::string("state-machine definition is not JSON: ") + e.what());
    }
    auto def = machine_from_json(j);
    validate_machine(def, known_actions);
    return def;
}

// ---- events -----------------------------------------------------------------

std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::inference_request: return "inference_request";
        case EventKind::retraining_request: return "retraining_request";
        default: return "drift_alert";
    }
}

EventKind parse_event_kind(std::string_view s) {
    if (s == "inference_request") return EventKind::inference_request;
    if (s == "retraining_request") return EventKind::retraining_request;
    if (s == "drift_alert") return EventKind::drift_alert;
    throw EventFormatError("unknown event kind '" + std::string(s) + "'");
}

std::string to_string(EventSource s) { return s == EventSource::cli ? "cli" : "watch_dir"; }

std::string machine_for(EventKind k) { return k == EventKind::inference_request ? "inference" : "retraining"; }

nlohmann::json to_json(const Event& e) {
    return {{"event_id", e.event_id}, {"kind", to_string(e.kind)},     {"payload", e.payload},
            {"timestamp", e.timestamp}, {"source", to_string(e.source)}, {"options", e.options}};
}

Event event_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw EventFormatError("event must be a JSON object");
    try {
        Event e;
        e.event_id = j.value("event_id", "");
        e.kind = parse_event_kind(j.at("kind").get<std::string>());
        const auto& p = j.at("payload");
        if (p.is_string()) {
            e.payload.push_back(p.get<std::string>());
        } else if (p.is_array()) {
            e.payload = p.get<std::vector<std::string>>();
        } else {
            throw EventFormatError("event payload must be a path or a list of paths");
        }
        e.timestamp = j.value("timestamp", "");
        const std::string src = j.value("source", "cli");
        if (src != "cli" && src != "watch_dir") throw EventFormatError("unknown event source '" + src + "'");
        e.source = src == "cli" ? EventSource::cli : EventSource::watch_dir;
        if (j.contains("options")) {
            if (!j["options"].is_object()) throw EventFormatError("event options must be an object");
            e.options = j["options"];
        }
        for (char c : e.event_id) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) {
                throw EventFormatError("event_id may only contain letters, digits, '-', '_' and '.'");
            }
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw EventFormatError(std::string("malformed event: ") + ex.what());
    }
}

Event parse_event(std::string_view text) {
    try {
        return event_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw EventFormatError(std::string("event is not valid JSON: ") + e.what());
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

// ---- run records ------------------------------------------------------------

std::string to_string(StateStatus s) {
    switch (s) {
        case StateStatus::pending: return "pending";
        case StateStatus::running: return "running";
        case StateStatus::succeeded: return "succeeded";
        case StateStatus::failed: return "failed";
        default: return "skipped";
    }
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::pending: return "pending";
        case RunStatus::running: return "running";
        case RunStatus::succeeded: return "succeeded";
        default: return "failed";
    }
}

namespace {

StateStatus parse_state_status(const std::string& s) {
    for (auto v : {StateStatus::pending, StateStatus::running, StateStatus::succeeded, StateStatus::failed,
                   StateStatus::skipped}) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument("unknown state status " + s);
}

RunStatus parse_run_status(const std::string& s) {
    for (auto v : {RunStatus::pending, RunStatus::running, RunStatus::succeeded, RunStatus::failed}) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument("unknown run status " + s);
}

}  // namespace

std::string run_id_for(const Event& e) { return "run-" + e.event_id; }

nlohmann::json to_json(const PipelineRun& r) {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : r.states) {
        states.push_back({{"name", s.name},
                          {"status", to_string(s.status)},
                          {"attempts", s.attempts},
                          {"started", s.started},
                          {"ended", s.ended},
                          {"diagnostics", s.diagnostics}});
    }
    return {{"run_id", r.run_id},   {"machine", r.machine}, {"event_id", r.event_id},
            {"event", to_json(r.event)}, {"states", states},   {"status", to_string(r.status)},
            {"config", r.config},   {"config_hash", r.config_hash}, {"tool_version", kToolVersion},
            {"created", r.created}, {"updated", r.updated}};
}

PipelineRun run_from_json(const nlohmann::json& j) {
    PipelineRun r;
    r.run_id = j.at("run_id").get<std::string>();
    r.machine = j.at("machine").get<std::string>();
    r.event_id = j.at("event_id").get<std::string>();
    r.event = event_from_json(j.at("event"));
    for (const auto& s : j.at("states")) {
        StateRecord rec;
        rec.name = s.at("name").get<std::string>();
        rec.status = parse_state_status(s.at("status").get<std::string>());
        rec.attempts = s.at("attempts").get<std::size_t>();
        rec.started = s.value("started", "");
        rec.ended = s.value("ended", "");
        rec.diagnostics = s.value("diagnostics", "");
        r.states.push_back(std::move(rec));
    }
    r.status = parse_run_status(j.at("status").get<std::string>());
    r.config = j.value("config", nlohmann::json::object());
    r.config_hash = j.value("config_hash", "");
    r.created = j.value("created", "");
    r.updated = j.value("updated", "");
    return r;
}

void save_run(const PipelineRun& r, const fs::path& run_dir) {
    write_file_atomic(run_dir / "run.json", to_json(r).dump(2) + "\n");
}

std::optional<PipelineRun> load_run(const fs::path& run_dir) {
    const auto path = run_dir / "run.json";
    if (!fs::exists(path)) return std::nullopt;
    try {
        return run_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const std::exception& e) {
        throw std::runtime_error("corrupt run record " + path.string() + ": " + e.what());
    }
}

}  // namespace hscls
