#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscls/fs.hpp"

namespace hscls {

inline constexpr int kMachineFormatVersion = 1;

enum class OnFailure { halt, skip };

struct RetryPolicy {
    std::size_t max_attempts = 3;
    double backoff_seconds = 2.0;  // doubles after every failed attempt

    bool operator==(const RetryPolicy&) const = default;
};

struct StateDef {
    std::string name;
    std::string action;
    RetryPolicy retry;
    OnFailure on_failure = OnFailure::halt;

    bool operator==(const StateDef&) const = default;
};

struct StateMachineDef {
    std::string name;
    std::vector<StateDef> states;

    bool operator==(const StateMachineDef&) const = default;
};

class MachineDefinitionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// validate_input -> preprocess -> load_active_model -> predict -> write_results
StateMachineDef define_inference_machine(const RetryPolicy& retry = {});
/// validate_input -> preprocess -> tune_or_load_config -> train_candidates ->
/// evaluate -> ab_test -> register_candidate -> promote_if_winner
StateMachineDef define_retraining_machine(const RetryPolicy& retry = {});

/// Unique state names, at least one state, every action id known.
void validate_machine(const StateMachineDef& def, const std::set<std::string>& known_actions);

nlohmann::json to_json(const StateMachineDef& def);
StateMachineDef machine_from_json(const nlohmann::json& j);
std::string serialize_machine(const StateMachineDef& def);
/// Parses and validates against `known_actions`.
StateMachineDef parse_machine(std::string_view text, const std::set<std::string>& known_actions);

// ---- events -----------------------------------------------------------------

enum class EventKind { inference_request, retraining_request, drift_alert };
enum class EventSource { watch_dir, cli };

std::string to_string(EventKind k);
EventKind parse_event_kind(std::string_view s);
std::string to_string(EventSource s);

/// "inference" for inference requests, "retraining" otherwise.
std::string machine_for(EventKind k);

struct Event {
    std::string event_id;
    EventKind kind = EventKind::inference_request;
    std::vector<std::string> payload;  // file paths
    std::string timestamp;
    EventSource source = EventSource::cli;
    nlohmann::json options = nlohmann::json::object();

    bool operator==(const Event&) const = default;
};

class EventFormatError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

nlohmann::json to_json(const Event& e);
/// Accepts payload as a string or a list of strings; event_id and timestamp
/// may be absent (the caller assigns them).
Event event_from_json(const nlohmann::json& j);
Event parse_event(std::string_view text);

/// UTC, millisecond resolution: 2024-05-01T12:00:00.000Z
std::string utc_timestamp();

// ---- run records ------------------------------------------------------------

enum class StateStatus { pending, running, succeeded, failed, skipped };
enum class RunStatus { pending, running, succeeded, failed };

std::string to_string(StateStatus s);
std::string to_string(RunStatus s);

struct StateRecord {
    std::string name;
    StateStatus status = StateStatus::pending;
    std::size_t attempts = 0;
    std::string started;
    std::string ended;
    std::string diagnostics;
};

struct PipelineRun {
    std::string run_id;
    std::string machine;
    std::string event_id;
    Event event;
    std::vector<StateRecord> states;
    RunStatus status = RunStatus::pending;
    nlohmann::json config = nlohmann::json::object();
    std::string config_hash;
    std::string created;
    std::string updated;

    bool terminal() const { return status == RunStatus::succeeded || status == RunStatus::failed; }
};

std::string run_id_for(const Event& e);

nlohmann::json to_json(const PipelineRun& r);
PipelineRun run_from_json(const nlohmann::json& j);

/// Atomic write of <run_dir>/run.json.
void save_run(const PipelineRun& r, const fs::path& run_dir);
std::optional<PipelineRun> load_run(const fs::path& run_dir);

}  // namespace hscls
