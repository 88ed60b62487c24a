#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hscls/fs.hpp"
#include "hscls/text.hpp"

namespace hscls {

struct RawRecord {
    std::string record_id;
    std::string short_description;
    std::string medium_description;
    std::optional<std::string> etim;
    std::string hs_code;
    int assurance_level = 0;
    bool upsampled = false;  // duplicate produced by stratified_upsample

    bool operator==(const RawRecord&) const = default;
};

bool is_hs_code(std::string_view code);

/// Throws std::invalid_argument naming the violated field.
void validate_record(const RawRecord& r);

/// Immutable, validated collection of records with a per-class position
/// index. Record ids are unique except for flagged upsample duplicates.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<RawRecord> records);

    const std::vector<RawRecord>& records() const { return records_; }
    const RawRecord& operator[](std::size_t i) const { return records_[i]; }
    const std::map<std::string, std::vector<std::size_t>>& class_index() const { return class_index_; }

    /// Sorted label set; position in this list is the class id.
    std::vector<std::string> classes() const;
    std::map<std::string, std::size_t> class_counts() const;
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

private:
    std::vector<RawRecord> records_;
    std::map<std::string, std::vector<std::size_t>> class_index_;
};

struct FilterResult {
    Dataset data;
    std::optional<std::string> warning;  // set when nothing survives
};

FilterResult filter_by_assurance(const Dataset& data, int min_level = 3);

struct SplitConfig {
    double test_fraction = 0.05;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Per class: round(n_c * test_fraction) test records, at least one and at
/// most n_c - 1. Both sides keep the original relative order.
TrainTestSplit stratified_split(const Dataset& data, const SplitConfig& cfg);

enum class UpsampleStrategy { mean, median };

UpsampleStrategy parse_upsample_strategy(std::string_view s);

/// Minority classes are those with share < minority_threshold. The target is
/// T = ceil(mean or median of the minority counts); every minority class
/// below T is topped up to exactly T with seeded uniform draws (with
/// replacement) of its own records. Duplicates are appended after all
/// original records and flagged.
Dataset stratified_upsample(const Dataset& data, double minority_threshold, UpsampleStrategy strategy,
                            std::uint64_t seed);

/// normalize(short) + " " + normalize(medium) [+ " " + normalize(etim)],
/// with empty parts dropped.
std::string combined_text(const RawRecord& r, const TokenSet& stopwords);
std::string combined_text(std::string_view short_desc, std::string_view medium_desc,
                          const std::optional<std::string>& etim, const TokenSet& stopwords);

struct TokenSequence {
    std::vector<std::int32_t> ids;
    std::int32_t label_id = -1;
    std::string original_record_id;
};

/// Normalizes and tokenizes every record; labels index into `class_list`.
std::vector<TokenSequence> encode_dataset(const Dataset& data, const Vocabulary& vocab,
                                          const std::vector<std::string>& class_list, std::size_t max_len,
                                          const TokenSet& stopwords);

// ---- CSV -------------------------------------------------------------------

struct FormatIssue {
    std::size_t line;
    std::string message;
};

class CorpusFormatError : public std::runtime_error {
public:
    explicit CorpusFormatError(std::vector<FormatIssue> issues);
    const std::vector<FormatIssue>& issues() const { return issues_; }

private:
    std::vector<FormatIssue> issues_;
};

inline constexpr const char* kCorpusHeader =
    "record_id,short_description,medium_description,etim,hs_code,assurance_level";

/// Reads the corpus schema. An optional trailing `upsampled` column (0/1) is
/// accepted so that prepared training files round-trip.
Dataset read_corpus_csv(const fs::path& path);
Dataset parse_corpus_csv(std::string_view text);
std::string corpus_to_csv(const Dataset& data, bool with_upsample_flag);
void write_corpus_csv(const fs::path& path, const Dataset& data, bool with_upsample_flag = false);

/// Unlabeled input for inference. Requires record_id, short_description and
/// medium_description columns (any order); etim is optional, other columns
/// are ignored.
struct InferenceRecord {
    std::string record_id;
    std::string short_description;
    std::string medium_description;
    std::optional<std::string> etim;
};

std::vector<InferenceRecord> read_inference_csv(const fs::path& path);
std::vector<InferenceRecord> parse_inference_csv(std::string_view text);

// ---- synthetic data --------------------------------------------------------

struct SyntheticCorpusSpec {
    std::size_t n_classes = 10;
    std::size_t per_class = 200;
    std::size_t keywords_per_class = 30;
    std::size_t noise_tokens = 40;
    double noise_fraction = 0.2;  // probability a token comes from the shared pool
    std::size_t short_min = 3, short_max = 6;
    std::size_t medium_min = 6, medium_max = 12;
    std::uint64_t seed = 1;
};

/// Labeled corpus with disjoint class keyword vocabularies plus a shared noise
/// pool. Codes are 850100, 850101, ...; assurance levels alternate 3/4.
Dataset make_synthetic_corpus(const SyntheticCorpusSpec& spec);

}  // namespace hscls
