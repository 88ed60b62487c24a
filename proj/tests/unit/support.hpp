#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include <unistd.h>

#include "hscls/corpus.hpp"
#include "hscls/fs.hpp"
#include "hscls/rng.hpp"

namespace hscls::test {

// Scratch directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("hscls_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline RawRecord record(std::string id, std::string code, int level = 4, std::string text = "circuit breaker") {
    RawRecord r;
    r.record_id = std::move(id);
    r.short_description = text;
    r.medium_description = text + " unit";
    r.hs_code = std::move(code);
    r.assurance_level = level;
    return r;
}

// n records per code with ids "<code>-<i>".
inline Dataset class_counts_fixture(const std::vector<std::pair<std::string, std::size_t>>& counts) {
    std::vector<RawRecord> out;
    for (const auto& [code, n] : counts) {
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(record(code + "-" + std::to_string(i), code, 4, "item " + code + " number " + std::to_string(i)));
        }
    }
    return Dataset(std::move(out));
}

// Two classes with disjoint keywords; any reasonable classifier separates them.
inline Dataset separable_corpus(std::size_t per_class, std::uint64_t seed) {
    const std::vector<std::string> a{"relay", "contactor", "coil", "switch", "breaker"};
    const std::vector<std::string> b{"cable", "copper", "wire", "strand", "sheath"};
    Rng rng(seed);
    std::vector<RawRecord> out;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& words = c == 0 ? a : b;
        for (std::size_t i = 0; i < per_class; ++i) {
            std::string s, m;
            for (int k = 0; k < 3; ++k) s += (k ? " " : "") + words[rng.below(words.size())];
            for (int k = 0; k < 5; ++k) m += (k ? " " : "") + words[rng.below(words.size())];
            RawRecord r;
            r.record_id = "r" + std::to_string(c) + "_" + std::to_string(i);
            r.short_description = s;
            r.medium_description = m;
            r.hs_code = c == 0 ? "853620" : "854449";
            r.assurance_level = 4;
            out.push_back(std::move(r));
        }
    }
    return Dataset(std::move(out));
}

}  // namespace hscls::test
