#include "hscls/pipeline/watcher.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace hscls {

std::string next_event_id(const Workspace& ws) {
    static std::mutex mu;
    std::lock_guard<std::mutex> guard(mu);
    fs::create_directories(ws.events_dir());
    const fs::path counter = ws.events_dir() / ".counter";
    const int fd = ::open(counter.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd < 0) throw std::runtime_error("cannot open event counter " + counter.string());
    ::flock(fd, LOCK_EX);
    unsigned long long n = 0;
    try {
        const std::string text = read_file(counter);
        if (!text.empty()) n = std::stoull(text);
    } catch (const std::exception&) {
        n = 0;
    }
    ++n;
    try {
        write_file_atomic(counter, std::to_string(n) + "\n");
    } catch (...) {
        ::flock(fd, LOCK_UN);
        ::close(fd);
        throw;
    }
    ::flock(fd, LOCK_UN);
    ::close(fd);
    char buf[32];
    std::snprintf(buf, sizeof buf, "evt-%06llu", n);
    return buf;
}

void Watcher::reject(const fs::path& file, const std::string& reason) {
    const fs::path dir = file.parent_path() / "rejected";
    fs::create_directories(dir);
    const fs::path dest = dir / file.filename();
    std::error_code ec;
    fs::rename(file, dest, ec);
    write_file_atomic(dir / (file.filename().string() + ".reason"), reason + "\n");
    seen_.erase(file.string());
}

std::vector<Event> Watcher::poll() {
    std::vector<Event> out;
    for (const char* machine : {"inference", "retraining"}) {
        const fs::path dir = ws_.drop_dir(machine);
        if (!fs::exists(dir)) continue;
        std::vector<std::pair<fs::file_time_type, fs::path>> ready;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            const auto name = e.path().filename().string();
            if (name.empty() || name[0] == '.' || name.find(".tmp.") != std::string::npos) continue;
            std::error_code ec;
            const auto size = fs::file_size(e.path(), ec);
            if (ec) continue;
            auto it = seen_.find(e.path().string());
            if (it == seen_.end() || it->second != size) {
                // First sighting or still growing: wait for the next poll.
                seen_[e.path().string()] = size;
                continue;
            }
            ready.emplace_back(fs::last_write_time(e.path(), ec), e.path());
        }
        std::sort(ready.begin(), ready.end());
        for (const auto& [mtime, path] : ready) {
            const auto name = path.filename().string();
            Event ev;
            try {
                if (path.extension() == ".json") {
                    ev = parse_event(read_file(path));
                    if (machine_for(ev.kind) != machine) {
                        throw EventFormatError("event kind " + to_string(ev.kind) + " does not belong in events/" + machine);
                    }
                    for (auto& p : ev.payload) {
                        if (fs::path(p).is_relative()) p = fs::absolute(path.parent_path() / p).lexically_normal().string();
                        if (!fs::exists(p)) throw EventFormatError("payload " + p + " does not exist");
                    }
                } else {
                    ev.kind = std::string(machine) == "inference" ? EventKind::inference_request
                                                                 : EventKind::retraining_request;
                }
            } catch (const std::exception& e) {
                reject(path, e.what());
                continue;
            }
            ev.event_id = next_event_id(ws_);
            if (ev.timestamp.empty()) ev.timestamp = utc_timestamp();
            ev.source = EventSource::watch_dir;
            const fs::path dest = path.parent_path() / "processed" / (ev.event_id + "__" + name);
            fs::create_directories(dest.parent_path());
            fs::rename(path, dest);
            seen_.erase(path.string());
            if (path.extension() != ".json") ev.payload = {fs::absolute(dest).string()};
            out.push_back(std::move(ev));
        }
    }
    // Forget files that disappeared between polls.
    for (auto it = seen_.begin(); it != seen_.end();) {
        it = fs::exists(it->first) ? std::next(it) : seen_.erase(it);
    }
    return out;
}

}  // namespace hscls
