#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hscls/fs.hpp"
#include "hscls/models.hpp"

namespace hscls {

// Layout: "HSCLSWTS" | u64 LE manifest length | JSON manifest | f64 LE blobs
// (offsets relative to the first blob byte) | u32 LE CRC-32C of everything
// before it.
inline constexpr int kWeightsFormatVersion = 1;

class WeightsFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class WeightsChecksumError : public WeightsFormatError {
public:
    using WeightsFormatError::WeightsFormatError;
};

class WeightsVersionError : public WeightsFormatError {
public:
    WeightsVersionError(int found, std::string msg) : WeightsFormatError(std::move(msg)), found_(found) {}
    int found_version() const { return found_; }

private:
    int found_;
};

class WeightsTruncatedError : public WeightsFormatError {
public:
    using WeightsFormatError::WeightsFormatError;
};

std::string serialize_weights(const ModelWeights& w);
ModelWeights deserialize_weights(std::string_view bytes);

void save_weights(const ModelWeights& w, const fs::path& path);
ModelWeights load_weights(const fs::path& path);

/// Content hash of the serialized form (hex FNV-1a 64).
std::string weights_hash(const ModelWeights& w);

}  // namespace hscls
