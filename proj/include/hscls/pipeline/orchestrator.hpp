#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "hscls/pipeline/executor.hpp"
#include "hscls/pipeline/watcher.hpp"

namespace hscls {

/// Loads machines/<name>.json (validated against `actions`), falling back to
/// the built-in definition when the file is absent.
StateMachineDef load_machine(const Workspace& ws, const std::string& name, const ActionTable& actions);

/// Watchers feed one queue per machine; one worker per machine drains its
/// queue sequentially, so runs of a machine never interleave while the two
/// machines run concurrently.
class Orchestrator {
public:
    Orchestrator(Workspace ws, Settings settings, ActionTable actions, Sleeper sleeper = real_sleep);

    /// Opens a run record for the event and executes it on the calling thread.
    PipelineRun submit(const Event& event);

    /// Run ids whose record is not terminal (a crashed or queued run).
    std::vector<std::string> incomplete_runs() const;
    /// Executes every incomplete run, oldest first.
    std::vector<PipelineRun> resume_incomplete();

    /// One watcher poll; each dispatched event is recorded and executed in
    /// order on the calling thread.
    std::vector<PipelineRun> poll_once();

    /// Resumes incomplete runs, then polls every poll_seconds until `stop`
    /// is set. Blocks.
    void serve(const std::atomic<bool>& stop);

    std::function<void(const std::string&)> log;

private:
    Workspace ws_;
    Settings settings_;
    ActionTable actions_;
    Sleeper sleeper_;
    Registry registry_;
    Watcher watcher_;
    std::map<std::string, StateMachineDef> machines_;

    Executor make_executor();
    void note(const std::string& msg) const;
};

}  // namespace hscls
