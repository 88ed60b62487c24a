#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hscls/fs.hpp"

namespace hscls {

using TokenSet = std::unordered_set<std::string>;

/// Built-in English function-word list (53 entries).
const TokenSet& default_stopwords();

/// One stopword per line; blank lines and lines starting with '#' ignored.
TokenSet load_stopwords(const fs::path& path);

/// Lowercases ASCII, drops every byte that is not alphanumeric, whitespace or
/// part of a multi-byte UTF-8 sequence, collapses whitespace, removes
/// stopwords and trims. Idempotent.
std::string normalize_text(std::string_view raw, const TokenSet& stopwords);

std::vector<std::string> split_whitespace(std::string_view text);

class Vocabulary {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kOov = 1;
    static constexpr std::string_view kPadToken = "<PAD>";
    static constexpr std::string_view kOovToken = "<OOV>";

    Vocabulary();

    /// Ranks tokens by descending frequency (ties lexicographic) and keeps the
    /// top max_size - 2 behind the reserved PAD/OOV ids.
    static Vocabulary build(std::span<const std::string> corpus, std::size_t max_size);

    /// Real tokens in id order, starting at id 2.
    static Vocabulary from_tokens(std::span<const std::string> tokens);

    /// Parses the `token<TAB>id` text form.
    static Vocabulary parse(std::string_view text);
    static Vocabulary load(const fs::path& path);

    std::string serialize() const;
    void save(const fs::path& path) const;

    /// FNV-1a 64 of the serialized form, hex encoded.
    std::string hash() const;

    std::int32_t id_of(std::string_view token) const;
    std::optional<std::int32_t> find(std::string_view token) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    std::size_t size() const { return tokens_.size(); }
    std::size_t max_size() const { return max_size_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::size_t max_size_ = 2;

    void add(std::string token);
};

/// Whitespace split, unknown tokens map to OOV, truncated or right-padded
/// with PAD to exactly max_len ids.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

}  // namespace hscls
