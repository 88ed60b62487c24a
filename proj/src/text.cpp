#include "hscls/text.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hscls/checksum.hpp"

namespace hscls {

const TokenSet& default_stopwords() {
    static const TokenSet words = {
        "a",    "about", "above", "after", "again", "all",   "an",    "and",  "any",
        "are",  "as",    "at",    "be",    "been",  "but",   "by",    "can",  "do",
        "does", "for",   "from",  "had",   "has",   "have",  "he",    "her",  "his",
        "how",  "i",     "if",    "in",    "into",  "is",    "it",    "its",  "of",
        "on",   "or",    "our",   "she",   "so",    "than",  "that",  "the",  "their",
        "then", "there", "these", "they",  "this",  "to",    "was",   "with",
    };
    return words;
}

TokenSet load_stopwords(const fs::path& path) {
    std::istringstream in(read_file(path));
    TokenSet out;
    std::string line;
    while (std::getline(in, line)) {
        auto words = split_whitespace(line);
        if (words.empty() || words.front().starts_with('#')) continue;
        out.insert(normalize_text(words.front(), {}));
    }
    out.erase("");
    return out;
}

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string normalize_text(std::string_view raw, const TokenSet& stopwords) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (char ch : raw) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80) {
            cleaned.push_back(ch);
        } else if (c >= 'A' && c <= 'Z') {
            cleaned.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            cleaned.push_back(ch);
        } else if (is_space(c)) {
            cleaned.push_back(' ');
        }
    }
    std::string out;
    for (auto& tok : split_whitespace(cleaned)) {
        if (stopwords.contains(tok)) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

Vocabulary::Vocabulary() {
    add(std::string(kPadToken));
    add(std::string(kOovToken));
}

void Vocabulary::add(std::string token) {
    auto id = static_cast<std::int32_t>(tokens_.size());
    if (!ids_.emplace(token, id).second) throw std::invalid_argument("duplicate vocabulary token: " + token);
    tokens_.push_back(std::move(token));
    max_size_ = std::max(max_size_, tokens_.size());
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t max_size) {
    if (max_size < 3) throw std::invalid_argument("vocabulary max_size must be at least 3");
    std::map<std::string, std::size_t> freq;
    for (const auto& text : corpus) {
        for (auto& tok : split_whitespace(text)) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    // std::map iteration is already lexicographic, so a stable sort on count
    // gives the tie rule.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocabulary v;
    v.max_size_ = max_size;
    for (auto& [tok, count] : ranked) {
        if (v.tokens_.size() >= max_size) break;
        if (tok == kPadToken || tok == kOovToken) continue;
        v.add(tok);
    }
    v.max_size_ = max_size;
    return v;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
    Vocabulary v;
    for (const auto& t : tokens) v.add(t);
    return v;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::vector<std::pair<std::int32_t, std::string>> entries;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto tab = line.rfind('\t');
        if (tab == std::string_view::npos) {
            throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": missing TAB");
        }
        std::int32_t id = -1;
        auto idtxt = line.substr(tab + 1);
        auto [p, ec] = std::from_chars(idtxt.data(), idtxt.data() + idtxt.size(), id);
        if (ec != std::errc{} || p != idtxt.data() + idtxt.size()) {
            throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": bad id");
        }
        entries.emplace_back(id, std::string(line.substr(0, tab)));
    }
    std::sort(entries.begin(), entries.end());
    if (entries.size() < 2 || entries[0] != std::pair<std::int32_t, std::string>{kPad, std::string(kPadToken)} ||
        entries[1] != std::pair<std::int32_t, std::string>{kOov, std::string(kOovToken)}) {
        throw std::runtime_error("vocabulary must start with reserved <PAD>=0 and <OOV>=1");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < entries.size(); ++i) {
        if (entries[i].first != static_cast<std::int32_t>(i)) {
            throw std::runtime_error("vocabulary ids are not dense at id " + std::to_string(i));
        }
        v.add(entries[i].second);
    }
    return v;
}

Vocabulary Vocabulary::load(const fs::path& path) { return parse(read_file(path)); }

std::string Vocabulary::serialize() const {
    std::string out;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        out += tokens_[i];
        out.push_back('\t');
        out += std::to_string(i);
        out.push_back('\n');
    }
    return out;
}

void Vocabulary::save(const fs::path& path) const { write_file_atomic(path, serialize()); }

std::string Vocabulary::hash() const { return to_hex(fnv1a64(serialize())); }

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::int32_t Vocabulary::id_of(std::string_view token) const {
    if (token == kPadToken || token == kOovToken) return kOov;
    return find(token).value_or(kOov);
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    std::vector<std::int32_t> ids(max_len, Vocabulary::kPad);
    std::size_t pos = 0;
    for (auto& tok : split_whitespace(text)) {
        if (pos == max_len) break;
        ids[pos++] = vocab.id_of(tok);
    }
    return ids;
}

}  // namespace hscls
