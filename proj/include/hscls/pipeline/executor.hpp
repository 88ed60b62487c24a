#pragma once

#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "hscls/pipeline/machine.hpp"
#include "hscls/pipeline/registry.hpp"
#include "hscls/pipeline/workspace.hpp"
#include "hscls/settings.hpp"

namespace hscls {

struct ActionContext {
    const Event& event;
    const PipelineRun& run;
    fs::path run_dir;
    const Workspace& workspace;
    const Settings& settings;
    Registry& registry;
    std::function<void(const std::string&)> log;
};

/// Thrown by an action to mark its state skipped rather than failed.
class StateSkipped : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An action reads its inputs from, and writes its outputs into, the run
/// directory; re-running it after a crash must yield the same files.
using Action = std::function<void(ActionContext&)>;

class ActionTable {
public:
    void add(std::string id, Action action) { actions_[std::move(id)] = std::move(action); }
    bool contains(const std::string& id) const { return actions_.contains(id); }
    const Action& at(const std::string& id) const;
    std::set<std::string> ids() const;

private:
    std::map<std::string, Action> actions_;
};

using Sleeper = std::function<void(double seconds)>;

void real_sleep(double seconds);

/// Runs one state machine for one event, persisting run.json after every
/// transition. If a run record already exists the run resumes at the first
/// state that has not succeeded or been skipped, with the recorded event and
/// configuration; a terminal run is returned unchanged.
class Executor {
public:
    Executor(const ActionTable& actions, Workspace ws, Settings settings, Registry& registry,
             Sleeper sleeper = real_sleep);

    /// Loads the run record for `event`, or creates and persists a pending
    /// one. Recording before executing means a crash cannot lose the event.
    PipelineRun open(const StateMachineDef& machine, const Event& event);

    PipelineRun execute(const StateMachineDef& machine, const Event& event);

    /// Called after each persisted transition; crash-injection tests exit here.
    std::function<void(const PipelineRun&)> on_transition;
    std::function<void(const std::string&)> log;

private:
    const ActionTable& actions_;
    Workspace ws_;
    Settings settings_;
    Registry& registry_;
    Sleeper sleeper_;
};

}  // namespace hscls
