#include "hscls/pipeline/executor.hpp"

#include <chrono>
#include <cmath>
#include <thread>

namespace hscls {

const Action& ActionTable::at(const std::string& id) const {
    auto it = actions_.find(id);
    if (it == actions_.end()) throw std::out_of_range("no action registered as '" + id + "'");
    return it->second;
}

std::set<std::string> ActionTable::ids() const {
    std::set<std::string> out;
    for (const auto& [k, v] : actions_) out.insert(k);
    return out;
}

void real_sleep(double seconds) {
    if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

Executor::Executor(const ActionTable& actions, Workspace ws, Settings settings, Registry& registry, Sleeper sleeper)
    : actions_(actions), ws_(std::move(ws)), settings_(std::move(settings)), registry_(registry),
      sleeper_(std::move(sleeper)) {}

PipelineRun Executor::open(const StateMachineDef& machine, const Event& event) {
    validate_machine(machine, actions_.ids());
    if (machine_for(event.kind) != machine.name) {
        throw std::invalid_argument("event " + event.event_id + " (" + to_string(event.kind) +
                                    ") cannot run on machine " + machine.name);
    }
    if (event.event_id.empty()) throw std::invalid_argument("event has no id");

    const std::string run_id = run_id_for(event);
    const fs::path run_dir = ws_.run_dir(run_id);
    if (auto existing = load_run(run_dir)) {
        if (existing->machine != machine.name || existing->states.size() != machine.states.size()) {
            throw std::runtime_error("run " + run_id + " was recorded for a different machine definition");
        }
        return std::move(*existing);
    }
    PipelineRun run;
    run.run_id = run_id;
    run.machine = machine.name;
    run.event_id = event.event_id;
    run.event = event;
    Settings settings = settings_;
    if (!event.options.empty()) apply(settings, key_values_from_json(event.options), "event " + event.event_id);
    run.config = to_json(settings);
    run.config_hash = settings_hash(settings);
    run.created = run.updated = utc_timestamp();
    for (const auto& s : machine.states) {
        StateRecord rec;
        rec.name = s.name;
        run.states.push_back(std::move(rec));
    }
    fs::create_directories(run_dir);
    save_run(run, run_dir);
    return run;
}

PipelineRun Executor::execute(const StateMachineDef& machine, const Event& incoming) {
    PipelineRun run = open(machine, incoming);
    if (run.terminal()) return run;
    const bool resumed = run.status != RunStatus::pending;
    const std::string run_id = run.run_id;
    const fs::path run_dir = ws_.run_dir(run_id);
    const Event event = run.event;
    // Actions see the configuration recorded when the run was opened, so a
    // resumed run finishes the way it started.
    Settings settings;
    apply(settings, key_values_from_json(run.config), run_id + "/run.json");

    auto persist = [&] {
        run.updated = utc_timestamp();
        save_run(run, run_dir);
        if (on_transition) on_transition(run);
    };
    auto note = [&](const std::string& msg) {
        if (log) log(run_id + ": " + msg);
    };

    run.status = RunStatus::running;
    persist();
    if (resumed) note("resuming");

    for (std::size_t i = 0; i < machine.states.size(); ++i) {
        const StateDef& def = machine.states[i];
        StateRecord& rec = run.states[i];
        if (rec.status == StateStatus::succeeded || rec.status == StateStatus::skipped) continue;

        // A crash mid-attempt leaves the state "running"; that attempt counts,
        // but the resumed run always gets at least one more.
        std::size_t budget = def.retry.max_attempts;
        if (rec.status == StateStatus::running) budget = std::max(budget, rec.attempts + 1);
        if (rec.status == StateStatus::failed) rec.attempts = 0;

        bool done = false;
        while (!done && rec.attempts < budget) {
            ++rec.attempts;
            rec.status = StateStatus::running;
            rec.started = utc_timestamp();
            rec.ended.clear();
            persist();
            ActionContext ctx{event, run, run_dir, ws_, settings, registry_, [&](const std::string& m) { note(def.name + ": " + m); }};
            try {
                actions_.at(def.action)(ctx);
                rec.status = StateStatus::succeeded;
                rec.diagnostics.clear();
                done = true;
            } catch (const StateSkipped& e) {
                rec.status = StateStatus::skipped;
                rec.diagnostics = e.what();
                done = true;
            } catch (const std::exception& e) {
                rec.diagnostics = e.what();
                note(def.name + " attempt " + std::to_string(rec.attempts) + " failed: " + e.what());
                if (rec.attempts < budget) {
                    rec.status = StateStatus::pending;
                    rec.ended = utc_timestamp();
                    persist();
                    sleeper_(def.retry.backoff_seconds * std::pow(2.0, static_cast<double>(rec.attempts - 1)));
                    continue;
                }
                rec.status = StateStatus::failed;
            }
            rec.ended = utc_timestamp();
            persist();
        }
        if (rec.status == StateStatus::failed) {
            if (def.on_failure == OnFailure::skip) {
                rec.status = StateStatus::skipped;
                persist();
                continue;
            }
            run.status = RunStatus::failed;
            persist();
            note("failed in " + def.name);
            return run;
        }
    }
    run.status = RunStatus::succeeded;
    persist();
    note("succeeded");
    return run;
}

}  // namespace hscls
