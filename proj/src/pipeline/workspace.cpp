#include "hscls/pipeline/workspace.hpp"

#include "hscls/pipeline/machine.hpp"

namespace hscls {

void Workspace::init() const {
    for (const char* m : {"inference", "retraining"}) {
        fs::create_directories(drop_dir(m) / "processed");
        fs::create_directories(drop_dir(m) / "rejected");
    }
    fs::create_directories(alerts_dir());
    fs::create_directories(runs_dir());
    fs::create_directories(registry_dir());
    fs::create_directories(machines_dir());
    const Settings settings = load_settings();
    const RetryPolicy retry{settings.max_attempts, settings.backoff_seconds};
    for (const auto& def : {define_inference_machine(retry), define_retraining_machine(retry)}) {
        const auto path = machines_dir() / (def.name + ".json");
        if (!fs::exists(path)) write_file_atomic(path, serialize_machine(def));
    }
}

Settings Workspace::load_settings() const {
    Settings s;
    if (fs::exists(settings_file())) apply(s, parse_key_values(read_file(settings_file())), settings_file().string());
    return s;
}

}  // namespace hscls
