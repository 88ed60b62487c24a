#include "hscls/pipeline/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace hscls {

StateMachineDef load_machine(const Workspace& ws, const std::string& name, const ActionTable& actions) {
    const fs::path path = ws.machines_dir() / (name + ".json");
    if (fs::exists(path)) {
        auto def = parse_machine(read_file(path), actions.ids());
        if (def.name != name) throw MachineDefinitionError(path.string() + " defines machine '" + def.name + "'");
        return def;
    }
    const Settings s = ws.load_settings();
    const RetryPolicy retry{s.max_attempts, s.backoff_seconds};
    if (name == "inference") return define_inference_machine(retry);
    if (name == "retraining") return define_retraining_machine(retry);
    throw MachineDefinitionError("unknown machine '" + name + "'");
}

Orchestrator::Orchestrator(Workspace ws, Settings settings, ActionTable actions, Sleeper sleeper)
    : ws_(std::move(ws)), settings_(std::move(settings)), actions_(std::move(actions)), sleeper_(std::move(sleeper)),
      registry_(ws_.registry_dir()), watcher_(ws_) {
    for (const char* name : {"inference", "retraining"}) machines_.emplace(name, load_machine(ws_, name, actions_));
}

Executor Orchestrator::make_executor() {
    Executor ex(actions_, ws_, settings_, registry_, sleeper_);
    ex.log = log;
    return ex;
}

void Orchestrator::note(const std::string& msg) const {
    if (log) log(msg);
}

PipelineRun Orchestrator::submit(const Event& event) {
    auto ex = make_executor();
    return ex.execute(machines_.at(machine_for(event.kind)), event);
}

std::vector<std::string> Orchestrator::incomplete_runs() const {
    std::vector<std::pair<std::string, std::string>> found;  // (created, id)
    if (!fs::exists(ws_.runs_dir())) return {};
    for (const auto& e : fs::directory_iterator(ws_.runs_dir())) {
        if (!e.is_directory()) continue;
        try {
            auto run = load_run(e.path());
            if (run && !run->terminal()) found.emplace_back(run->created, run->run_id);
        } catch (const std::exception& ex) {
            note("skipping unreadable run record in " + e.path().string() + ": " + ex.what());
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> out;
    for (auto& [created, id] : found) out.push_back(std::move(id));
    return out;
}

std::vector<PipelineRun> Orchestrator::resume_incomplete() {
    std::vector<PipelineRun> out;
    for (const auto& id : incomplete_runs()) {
        auto run = load_run(ws_.run_dir(id));
        note("resuming " + id);
        out.push_back(submit(run->event));
    }
    return out;
}

std::vector<PipelineRun> Orchestrator::poll_once() {
    auto ex = make_executor();
    std::vector<PipelineRun> out;
    const auto events = watcher_.poll();
    for (const auto& ev : events) ex.open(machines_.at(machine_for(ev.kind)), ev);
    for (const auto& ev : events) out.push_back(ex.execute(machines_.at(machine_for(ev.kind)), ev));
    return out;
}

void Orchestrator::serve(const std::atomic<bool>& stop) {
    struct Queue {
        std::deque<Event> events;
        std::mutex mu;
        std::condition_variable cv;
    };
    std::map<std::string, Queue> queues;
    for (const auto& [name, def] : machines_) queues[name];

    auto enqueue = [&](const Event& ev) {
        auto& q = queues.at(machine_for(ev.kind));
        {
            std::lock_guard lock(q.mu);
            q.events.push_back(ev);
        }
        q.cv.notify_one();
    };

    for (const auto& id : incomplete_runs()) {
        note("queueing incomplete run " + id);
        enqueue(load_run(ws_.run_dir(id))->event);
    }

    std::vector<std::thread> workers;
    for (auto& [name, q] : queues) {
        workers.emplace_back([&, name = name, &q = q] {
            auto ex = make_executor();
            const auto& def = machines_.at(name);
            for (;;) {
                Event ev;
                {
                    std::unique_lock lock(q.mu);
                    q.cv.wait_for(lock, std::chrono::milliseconds(200), [&] { return !q.events.empty() || stop.load(); });
                    if (q.events.empty()) {
                        if (stop.load()) return;
                        continue;
                    }
                    ev = std::move(q.events.front());
                    q.events.pop_front();
                }
                try {
                    const auto run = ex.execute(def, ev);
                    note(run.run_id + " finished " + to_string(run.status));
                } catch (const std::exception& e) {
                    note("run for " + ev.event_id + " aborted: " + e.what());
                }
            }
        });
    }

    auto ex = make_executor();
    while (!stop.load()) {
        try {
            for (const auto& ev : watcher_.poll()) {
                ex.open(machines_.at(machine_for(ev.kind)), ev);
                note("event " + ev.event_id + " (" + to_string(ev.kind) + ")");
                enqueue(ev);
            }
        } catch (const std::exception& e) {
            note(std::string("watcher: ") + e.what());
        }
        const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(settings_.poll_seconds);
        while (!stop.load() && std::chrono::steady_clock::now() < until) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    }
    for (auto& [name, q] : queues) q.cv.notify_all();
    for (auto& w : workers) w.join();
}

}  // namespace hscls
