#include "hscls/pipeline/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>

#include "hscls/checksum.hpp"
#include "hscls/pipeline/machine.hpp"
#include "hscls/text.hpp"
#include "hscls/version.hpp"
#include "hscls/weights_io.hpp"

namespace hscls {

std::string to_string(EntryStatus s) {
    switch (s) {
        case EntryStatus::candidate: return "candidate";
        case EntryStatus::active: return "active";
        default: return "archived";
    }
}

namespace {

// Holds the in-process mutex and an exclusive flock for cross-process writers.
class RegistryLock {
public:
    RegistryLock(std::mutex& mu, const fs::path& root) : guard_(mu) {
        fs::create_directories(root);
        fd_ = ::open((root / ".lock").c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0) throw RegistryError("cannot open registry lock in " + root.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw RegistryError("cannot lock registry " + root.string());
        }
    }
    ~RegistryLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    RegistryLock(const RegistryLock&) = delete;
    RegistryLock& operator=(const RegistryLock&) = delete;

private:
    std::lock_guard<std::mutex> guard_;
    int fd_ = -1;
};

std::optional<int> parse_version_dir(const std::string& name) {
    if (name.size() < 2 || name[0] != 'v') return std::nullopt;
    int v = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), v);
    if (ec != std::errc{} || ptr != name.data() + name.size() || v <= 0) return std::nullopt;
    return v;
}

}  // namespace

Registry::Registry(fs::path root) : root_(std::move(root)) {}

std::vector<int> Registry::versions() const {
    std::vector<int> out;
    if (!fs::exists(root_)) return out;
    for (const auto& e : fs::directory_iterator(root_)) {
        if (!e.is_directory()) continue;
        if (auto v = parse_version_dir(e.path().filename().string())) out.push_back(*v);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<int> Registry::active_version() const {
    const auto path = root_ / "ACTIVE";
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.pop_back();
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw RegistryError("registry ACTIVE pointer is corrupt: '" + text + "'");
    }
    return v;
}

RegistryEntry Registry::read_entry(int version, std::optional<int> active) const {
    RegistryEntry e;
    e.version = version;
    e.dir = root_ / ("v" + std::to_string(version));
    const auto mpath = e.dir / "manifest.json";
    if (!fs::exists(mpath)) throw RegistryError("registry version " + std::to_string(version) + " does not exist");
    e.manifest = nlohmann::json::parse(read_file(mpath));
    e.model = e.manifest.value("model", "");
    e.weights_hash = e.manifest.value("weights_hash", "");
    e.vocab_hash = e.manifest.value("vocab_hash", "");
    e.data_hash = e.manifest.value("data_hash", "");
    e.seed = e.manifest.value("seed", std::uint64_t{0});
    e.source_run = e.manifest.value("source_run", "");
    e.created = e.manifest.value("created", "");
    if (active && *active == version) {
        e.status = EntryStatus::active;
    } else if (fs::exists(e.dir / "ARCHIVED")) {
        e.status = EntryStatus::archived;
    } else {
        e.status = EntryStatus::candidate;
    }
    return e;
}

RegistryEntry Registry::get(int version) const { return read_entry(version, active_version()); }

std::optional<RegistryEntry> Registry::active() const {
    const auto v = active_version();
    if (!v) return std::nullopt;
    return read_entry(*v, v);
}

std::vector<RegistryEntry> Registry::list() const {
    const auto active = active_version();
    std::vector<RegistryEntry> out;
    for (int v : versions()) out.push_back(read_entry(v, active));
    return out;
}

std::optional<RegistryEntry> Registry::find_by_source_run(const std::string& run_id) const {
    if (run_id.empty()) return std::nullopt;
    for (auto& e : list()) {
        if (e.source_run == run_id) return e;
    }
    return std::nullopt;
}

RegistryEntry Registry::register_model(const RegisterRequest& req) {
    const std::string weights_bytes = read_file(req.weights);
    const ModelWeights w = deserialize_weights(weights_bytes);
    const Vocabulary vocab = Vocabulary::load(req.vocab);
    if (vocab.hash() != w.vocab_hash) {
        throw VocabularyMismatchError("vocabulary " + req.vocab.string() + " (" + vocab.hash() +
                                      ") does not match the weights' vocabulary " + w.vocab_hash);
    }
    if (req.declared_vocab_hash && *req.declared_vocab_hash != w.vocab_hash) {
        throw VocabularyMismatchError("weights vocabulary " + w.vocab_hash + " differs from the declared snapshot " +
                                      *req.declared_vocab_hash);
    }

    RegistryLock lock(mu_, root_);
    const auto vs = versions();
    const int version = vs.empty() ? 1 : vs.back() + 1;
    const fs::path final_dir = root_ / ("v" + std::to_string(version));
    const fs::path stage = root_ / (".stage-v" + std::to_string(version) + "-" + std::to_string(::getpid()));
    fs::remove_all(stage);
    fs::create_directories(stage);

    write_file_atomic(stage / "weights.bin", weights_bytes);
    write_file_atomic(stage / "vocab.tsv", vocab.serialize());
    nlohmann::json manifest = {{"version", version},
                               {"model", to_string(w.architecture)},
                               {"config", config_to_json(w.config)},
                               {"weights_hash", to_hex(fnv1a64(weights_bytes))},
                               {"vocab_hash", w.vocab_hash},
                               {"data_hash", req.data_hash},
                               {"seed", req.seed},
                               {"class_list", w.class_list},
                               {"source_run", req.source_run},
                               {"created", utc_timestamp()},
                               {"tool_version", kToolVersion},
                               {"config_hash", w.metadata.config_hash}};
    if (req.eval_report) {
        write_file_atomic(stage / "eval.json", read_file(*req.eval_report));
        manifest["eval_report"] = "eval.json";
    }
    if (req.verdict) {
        write_file_atomic(stage / "verdict.json", read_file(*req.verdict));
        manifest["verdict"] = "verdict.json";
    }
    if (req.reference) {
        write_file_atomic(stage / "reference.json", req.reference->dump() + "\n");
        manifest["reference"] = "reference.json";
    }
    write_file_atomic(stage / "manifest.json", manifest.dump(2) + "\n");
    fs::rename(stage, final_dir);
    return read_entry(version, active_version());
}

void Registry::promote(int version) {
    RegistryLock lock(mu_, root_);
    const fs::path dir = root_ / ("v" + std::to_string(version));
    if (!fs::exists(dir / "manifest.json")) {
        throw RegistryError("cannot promote version " + std::to_string(version) + ": no such version");
    }
    const auto previous = active_version();
    if (previous && *previous == version) return;
    // Archive first: if we crash before the pointer moves, the pointer still
    // names the previous version and it is reported active.
    if (previous) write_file_atomic(root_ / ("v" + std::to_string(*previous)) / "ARCHIVED", utc_timestamp() + "\n");
    fs::remove(dir / "ARCHIVED");
    write_file_atomic(root_ / "ACTIVE", std::to_string(version) + "\n");
}

}  // namespace hscls
