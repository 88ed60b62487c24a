#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hscls/pipeline/machine.hpp"
#include "hscls/pipeline/workspace.hpp"

namespace hscls {

/// Next id from the persisted counter events/.counter ("evt-000001", ...),
/// safe across threads and processes.
std::string next_event_id(const Workspace& ws);

/// Polls events/inference and events/retraining. A file is dispatched once its
/// size is unchanged between two consecutive polls. `*.json` files are event
/// documents (their kind must match the directory; relative payload paths are
/// taken from the event file's directory); any other file becomes the
/// payload of a new request. Dispatched files move to processed/<event_id>__<name>;
/// invalid ones move to rejected/ next to a <name>.reason file.
class Watcher {
public:
    explicit Watcher(Workspace ws) : ws_(std::move(ws)) {}

    /// Events ready this poll, oldest modification time first per directory.
    std::vector<Event> poll();

private:
    Workspace ws_;
    std::map<std::string, std::uintmax_t> seen_;  // size at the previous poll

    void reject(const fs::path& file, const std::string& reason);
};

}  // namespace hscls
