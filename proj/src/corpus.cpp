#include "hscls/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "hscls/csv.hpp"
#include "hscls/rng.hpp"

namespace hscls {

bool is_hs_code(std::string_view code) {
    return code.size() == 6 && std::all_of(code.begin(), code.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void validate_record(const RawRecord& r) {
    if (r.record_id.empty()) throw std::invalid_argument("record_id is empty");
    if (!is_hs_code(r.hs_code)) throw std::invalid_argument("hs_code '" + r.hs_code + "' is not six digits");
    if (r.assurance_level < 1 || r.assurance_level > 4) {
        throw std::invalid_argument("assurance_level " + std::to_string(r.assurance_level) + " outside 1-4");
    }
    if (r.short_description.empty() && r.medium_description.empty()) {
        throw std::invalid_argument("record " + r.record_id + " has no description");
    }
}

Dataset::Dataset(std::vector<RawRecord> records) : records_(std::move(records)) {
    std::unordered_map<std::string, std::size_t> originals;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        validate_record(r);
        if (!r.upsampled && originals[r.record_id]++ > 0) {
            throw std::invalid_argument("duplicate record_id " + r.record_id);
        }
        class_index_[r.hs_code].push_back(i);
    }
}

std::vector<std::string> Dataset::classes() const {
    std::vector<std::string> out;
    out.reserve(class_index_.size());
    for (const auto& [code, _] : class_index_) out.push_back(code);
    return out;
}

std::map<std::string, std::size_t> Dataset::class_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [code, pos] : class_index_) out[code] = pos.size();
    return out;
}

FilterResult filter_by_assurance(const Dataset& data, int min_level) {
    std::vector<RawRecord> kept;
    for (const auto& r : data.records()) {
        if (r.assurance_level >= min_level) kept.push_back(r);
    }
    FilterResult out{Dataset(std::move(kept)), std::nullopt};
    if (out.data.empty()) {
        out.warning = "no records with assurance_level >= " + std::to_string(min_level);
    }
    return out;
}

TrainTestSplit stratified_split(const Dataset& data, const SplitConfig& cfg) {
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) {
        throw std::invalid_argument("test_fraction must lie strictly between 0 and 1");
    }
    for (const auto& [code, pos] : data.class_index()) {
        if (pos.size() < 2) {
            throw std::invalid_argument("class " + code + " has " + std::to_string(pos.size()) +
                                        " record(s); stratified split needs at least 2");
        }
    }
    Rng rng(derive_seed(cfg.seed, "stratified_split"));
    std::vector<char> is_test(data.size(), 0);
    for (const auto& [code, pos] : data.class_index()) {
        const std::size_t n = pos.size();
        auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.test_fraction));
        n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
        std::vector<std::size_t> order = pos;
        rng.shuffle(order);
        for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
    }
    std::vector<RawRecord> train, test;
    for (std::size_t i = 0; i < data.size(); ++i) (is_test[i] ? test : train).push_back(data[i]);
    return {Dataset(std::move(train)), Dataset(std::move(test))};
}

UpsampleStrategy parse_upsample_strategy(std::string_view s) {
    if (s == "mean") return UpsampleStrategy::mean;
    if (s == "median") return UpsampleStrategy::median;
    throw std::invalid_argument("unknown upsample strategy '" + std::string(s) + "'");
}

Dataset stratified_upsample(const Dataset& data, double minority_threshold, UpsampleStrategy strategy,
                            std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("stratified_upsample: empty dataset");
    const auto total = static_cast<double>(data.size());

    std::vector<std::pair<std::string, std::size_t>> minority;
    for (const auto& [code, pos] : data.class_index()) {
        if (static_cast<double>(pos.size()) / total < minority_threshold) minority.emplace_back(code, pos.size());
    }
    if (minority.empty()) return data;

    std::vector<double> counts;
    for (const auto& m : minority) counts.push_back(static_cast<double>(m.second));
    double centre = 0.0;
    if (strategy == UpsampleStrategy::mean) {
        for (double c : counts) centre += c;
        centre /= static_cast<double>(counts.size());
    } else {
        std::sort(counts.begin(), counts.end());
        const std::size_t k = counts.size();
        centre = k % 2 ? counts[k / 2] : 0.5 * (counts[k / 2 - 1] + counts[k / 2]);
    }
    const auto target = static_cast<std::size_t>(std::ceil(centre));

    std::vector<RawRecord> out = data.records();
    Rng rng(derive_seed(seed, "stratified_upsample"));
    for (const auto& [code, count] : minority) {
        if (count >= target) continue;
        const auto& pos = data.class_index().at(code);
        for (std::size_t i = count; i < target; ++i) {
            RawRecord dup = data[pos[rng.below(pos.size())]];
            dup.upsampled = true;
            out.push_back(std::move(dup));
        }
    }
    return Dataset(std::move(out));
}

std::string combined_text(std::string_view short_desc, std::string_view medium_desc,
                          const std::optional<std::string>& etim, const TokenSet& stopwords) {
    std::string out;
    auto append = [&](std::string_view part) {
        std::string n = normalize_text(part, stopwords);
        if (n.empty()) return;
        if (!out.empty()) out.push_back(' ');
        out += n;
    };
    append(short_desc);
    append(medium_desc);
    if (etim) append(*etim);
    return out;
}

std::string combined_text(const RawRecord& r, const TokenSet& stopwords) {
    return combined_text(r.short_description, r.medium_description, r.etim, stopwords);
}

std::vector<TokenSequence> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                          const std::vector<std::string>& class_list, std::size_t max_len,
                                          const TokenSet& stopwords) {
    std::unordered_map<std::string, std::int32_t> label_of;
    for (std::size_t i = 0; i < class_list.size(); ++i) label_of[class_list[i]] = static_cast<std::int32_t>(i);
    std::vector<TokenSequence> out;
    out.reserve(data.size());
    for (const auto& r : data.records()) {
        auto it = label_of.find(r.hs_code);
        if (it == label_of.end()) throw std::invalid_argument("class " + r.hs_code + " not in the class list");
        out.push_back({tokenize(combined_text(r, stopwords), vocab, max_len), it->second, r.record_id});
    }
    return out;
}

// ---- CSV -------------------------------------------------------------------

namespace {

std::string summarize(const std::vector<FormatIssue>& issues) {
    std::string msg = "corpus format error";
    for (std::size_t i = 0; i < issues.size() && i < 10; ++i) {
        msg += "\n  line " + std::to_string(issues[i].line) + ": " + issues[i].message;
    }
    if (issues.size() > 10) msg += "\n  ... " + std::to_string(issues.size() - 10) + " more";
    return msg;
}

std::vector<CsvRow> parse_or_report(std::string_view text) {
    try {
        return parse_csv(text);
    } catch (const CsvParseError& e) {
        throw CorpusFormatError({{e.line(), e.what()}});
    }
}

}  // namespace

CorpusFormatError::CorpusFormatError(std::vector<FormatIssue> issues)
    : std::runtime_error(summarize(issues)), issues_(std::move(issues)) {}

Dataset parse_corpus_csv(std::string_view text) {
    auto rows = parse_or_report(text);
    if (rows.empty()) throw CorpusFormatError({{1, "missing header"}});

    static const std::vector<std::string> expected = {"record_id", "short_description", "medium_description",
                                                      "etim",      "hs_code",           "assurance_level"};
    const auto& header = rows.front().fields;
    bool with_flag = header.size() == 7 && header[6] == "upsampled";
    if (!(header.size() == 6 || with_flag) || !std::equal(expected.begin(), expected.end(), header.begin())) {
        throw CorpusFormatError({{rows.front().line, std::string("header must be ") + kCorpusHeader}});
    }

    std::vector<FormatIssue> issues;
    std::vector<RawRecord> records;
    std::set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() != header.size()) {
            issues.push_back({row.line, "expected " + std::to_string(header.size()) + " fields, got " +
                                            std::to_string(row.fields.size())});
            continue;
        }
        RawRecord r;
        r.record_id = row.fields[0];
        r.short_description = row.fields[1];
        r.medium_description = row.fields[2];
        if (!row.fields[3].empty()) r.etim = row.fields[3];
        r.hs_code = row.fields[4];
        const auto& lvl = row.fields[5];
        auto [p, ec] = std::from_chars(lvl.data(), lvl.data() + lvl.size(), r.assurance_level);
        if (ec != std::errc{} || p != lvl.data() + lvl.size()) {
            issues.push_back({row.line, "assurance_level '" + lvl + "' is not an integer"});
            continue;
        }
        if (with_flag) r.upsampled = row.fields[6] == "1";
        try {
            validate_record(r);
        } catch (const std::invalid_argument& e) {
            issues.push_back({row.line, e.what()});
            continue;
        }
        if (!r.upsampled && !seen.insert(r.record_id).second) {
            issues.push_back({row.line, "duplicate record_id " + r.record_id});
            continue;
        }
        records.push_back(std::move(r));
    }
    if (!issues.empty()) throw CorpusFormatError(std::move(issues));
    return Dataset(std::move(records));
}

Dataset read_corpus_csv(const fs::path& path) { return parse_corpus_csv(read_file(path)); }

std::string corpus_to_csv(const Dataset& data, bool with_upsample_flag) {
    std::string out = kCorpusHeader;
    if (with_upsample_flag) out += ",upsampled";
    out.push_back('\n');
    for (const auto& r : data.records()) {
        std::vector<std::string> f = {r.record_id, r.short_description, r.medium_description, r.etim.value_or(""),
                                      r.hs_code,   std::to_string(r.assurance_level)};
        if (with_upsample_flag) f.push_back(r.upsampled ? "1" : "0");
        out += csv_line(f);
    }
    return out;
}

void write_corpus_csv(const fs::path& path, const Dataset& data, bool with_upsample_flag) {
    write_file_atomic(path, corpus_to_csv(data, with_upsample_flag));
}

std::vector<InferenceRecord> parse_inference_csv(std::string_view text) {
    auto rows = parse_or_report(text);
    if (rows.empty()) throw CorpusFormatError({{1, "missing header"}});
    const auto& header = rows.front().fields;
    auto col = [&](std::string_view name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    auto id_col = col("record_id");
    auto short_col = col("short_description");
    auto medium_col = col("medium_description");
    auto etim_col = col("etim");
    if (!id_col || !short_col || !medium_col) {
        throw CorpusFormatError(
            {{rows.front().line, "header needs record_id, short_description and medium_description"}});
    }
    std::vector<FormatIssue> issues;
    std::vector<InferenceRecord> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i].fields;
        if (f.size() != header.size()) {
            issues.push_back({rows[i].line, "expected " + std::to_string(header.size()) + " fields, got " +
                                                std::to_string(f.size())});
            continue;
        }
        if (f[*id_col].empty()) {
            issues.push_back({rows[i].line, "record_id is empty"});
            continue;
        }
        InferenceRecord r{f[*id_col], f[*short_col], f[*medium_col], std::nullopt};
        if (etim_col && !f[*etim_col].empty()) r.etim = f[*etim_col];
        out.push_back(std::move(r));
    }
    if (!issues.empty()) throw CorpusFormatError(std::move(issues));
    return out;
}

std::vector<InferenceRecord> read_inference_csv(const fs::path& path) {
    return parse_inference_csv(read_file(path));
}

// ---- synthetic data --------------------------------------------------------

Dataset make_synthetic_corpus(const SyntheticCorpusSpec& spec) {
    if (spec.n_classes == 0 || spec.per_class == 0 || spec.keywords_per_class == 0) {
        throw std::invalid_argument("synthetic corpus needs classes, records and keywords");
    }
    Rng rng(derive_seed(spec.seed, "synthetic_corpus"));
    auto keyword = [](std::size_t cls, std::size_t j) {
        return "kw" + std::to_string(cls) + "x" + std::to_string(j);
    };
    auto draw_token = [&](std::size_t cls) {
        if (spec.noise_tokens > 0 && rng.bernoulli(spec.noise_fraction)) {
            return "noise" + std::to_string(rng.below(spec.noise_tokens));
        }
        return keyword(cls, rng.below(spec.keywords_per_class));
    };
    auto sentence = [&](std::size_t cls, std::size_t lo, std::size_t hi) {
        std::size_t len = lo + rng.below(hi - lo + 1);
        std::string s;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) s.push_back(' ');
            s += draw_token(cls);
        }
        return s;
    };

    std::vector<RawRecord> records;
    records.reserve(spec.n_classes * spec.per_class);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            RawRecord r;
            r.record_id = "syn-" + std::to_string(c) + "-" + std::to_string(i);
            r.short_description = sentence(c, spec.short_min, spec.short_max);
            r.medium_description = sentence(c, spec.medium_min, spec.medium_max);
            r.hs_code = std::to_string(850100 + c);
            r.assurance_level = 3 + static_cast<int>((i + c) % 2);
            records.push_back(std::move(r));
        }
    }
    return Dataset(std::move(records));
}

}  // namespace hscls
