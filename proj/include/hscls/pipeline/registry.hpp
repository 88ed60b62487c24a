#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscls/fs.hpp"

namespace hscls {

enum class EntryStatus { candidate, active, archived };

std::string to_string(EntryStatus s);

struct RegistryEntry {
    int version = 0;
    fs::path dir;
    EntryStatus status = EntryStatus::candidate;
    std::string model;         // architecture tag
    std::string weights_hash;  // FNV-1a of weights.bin
    std::string vocab_hash;
    std::string data_hash;     // snapshot the model was trained on
    std::uint64_t seed = 0;
    std::string source_run;
    std::string created;
    nlohmann::json manifest;

    fs::path weights_path() const { return dir / "weights.bin"; }
    fs::path vocab_path() const { return dir / "vocab.tsv"; }
};

struct RegisterRequest {
    fs::path weights;
    fs::path vocab;
    std::optional<fs::path> eval_report;
    std::optional<fs::path> verdict;
    std::optional<nlohmann::json> reference;  // drift reference distributions
    std::optional<std::string> declared_vocab_hash;
    std::string data_hash;
    std::uint64_t seed = 0;
    std::string source_run;
};

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Layout: v<N>/{weights.bin, vocab.tsv, manifest.json[, eval.json,
/// verdict.json, reference.json]} and ACTIVE (one line, the version). Entries
/// are staged in a temporary directory and renamed into place; ACTIVE is
/// replaced by rename, so readers see the old or the new version only.
/// Mutations hold an in-process mutex and an flock on .lock.
class Registry {
public:
    explicit Registry(fs::path root);

    /// Checks the weights checksum and that the vocabulary file, the weights
    /// and (if given) the declared hash agree; assigns the next version.
    RegistryEntry register_model(const RegisterRequest& req);
    /// Makes `version` active and archives the previous active entry.
    void promote(int version);

    std::optional<int> active_version() const;
    std::optional<RegistryEntry> active() const;
    RegistryEntry get(int version) const;
    std::vector<RegistryEntry> list() const;
    /// Entry registered by `run_id`, if any.
    std::optional<RegistryEntry> find_by_source_run(const std::string& run_id) const;

    const fs::path& root() const { return root_; }

private:
    fs::path root_;
    mutable std::mutex mu_;

    std::vector<int> versions() const;
    RegistryEntry read_entry(int version, std::optional<int> active) const;
};

}  // namespace hscls
