#pragma once

#include <string>
#include <string_view>

#include "hscls/fs.hpp"
#include "hscls/settings.hpp"

namespace hscls {

/// Directory layout of a pipeline workspace:
///   hscls.toml                 settings (key = value)
///   machines/<name>.json       state-machine definitions
///   events/{inference,retraining}/   drop directories (processed/, rejected/ inside)
///   events/alerts/             drift alerts when automatic retraining is off
///   runs/<run_id>/             run record and outputs
///   registry/                  versioned models and the ACTIVE pointer
class Workspace {
public:
    explicit Workspace(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }
    fs::path settings_file() const { return root_ / "hscls.toml"; }
    fs::path machines_dir() const { return root_ / "machines"; }
    fs::path events_dir() const { return root_ / "events"; }
    fs::path drop_dir(std::string_view machine) const { return events_dir() / std::string(machine); }
    fs::path alerts_dir() const { return events_dir() / "alerts"; }
    fs::path runs_dir() const { return root_ / "runs"; }
    fs::path run_dir(std::string_view run_id) const { return runs_dir() / std::string(run_id); }
    fs::path registry_dir() const { return root_ / "registry"; }

    /// Creates the directory tree and the default machine definitions; existing
    /// files are left untouched. Retry policies come from max_attempts and
    /// backoff_seconds in hscls.toml.
    void init() const;

    /// Defaults overlaid with hscls.toml (when present).
    Settings load_settings() const;

private:
    fs::path root_;
};

}  // namespace hscls
