#include "hscls/weights_io.hpp"

#include <bit>
#include <cstring>

#include <nlohmann/json.hpp>

#include "hscls/checksum.hpp"

namespace hscls {

namespace {

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

constexpr std::string_view kMagic = "HSCLSWTS";
constexpr std::size_t kHeaderSize = 8 + 8;
constexpr std::size_t kTrailerSize = 4;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get(std::string_view in, std::size_t at) {
    T v;
    std::memcpy(&v, in.data() + at, sizeof(T));
    return v;
}

nlohmann::json metadata_to_json(const TrainingMetadata& m) {
    return {{"seed", m.seed},
            {"epochs_run", m.epochs_run},
            {"best_epoch", m.best_epoch},
            {"final_loss", m.final_loss},
            {"optimizer", m.optimizer},
            {"initializer", m.initializer},
            {"tool_version", m.tool_version},
            {"config_hash", m.config_hash}};
}

TrainingMetadata metadata_from_json(const nlohmann::json& j) {
    TrainingMetadata m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epochs_run = j.at("epochs_run").get<std::size_t>();
    m.best_epoch = j.at("best_epoch").get<std::size_t>();
    m.final_loss = j.at("final_loss").get<double>();
    m.optimizer = j.at("optimizer").get<std::string>();
    m.initializer = j.at("initializer").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    return m;
}

}  // namespace

std::string serialize_weights(const ModelWeights& w) {
    nlohmann::json dir = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& t : w.tensors) {
        const std::size_t len = t.value.size() * sizeof(double);
        dir.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"length", len}});
        offset += len;
    }
    nlohmann::json manifest = {
        {"format_version", kWeightsFormatVersion},
        {"architecture", to_string(w.architecture)},
        {"config", config_to_json(w.config)},
        {"dims", {{"vocab_size", w.dims.vocab_size}, {"n_classes", w.dims.n_classes}, {"max_len", w.dims.max_len}}},
        {"vocab_hash", w.vocab_hash},
        {"class_list", w.class_list},
        {"tensors", dir},
        {"metadata", metadata_to_json(w.metadata)},
        {"semantic_version", w.semantic_version},
    };
    const std::string text = manifest.dump();

    std::string out;
    out.reserve(kHeaderSize + text.size() + offset + kTrailerSize);
    out.append(kMagic);
    put<std::uint64_t>(out, text.size());
    out.append(text);
    for (const auto& t : w.tensors) {
        out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(double));
    }
    put<std::uint32_t>(out, crc32c(out));
    return out;
}

ModelWeights deserialize_weights(std::string_view bytes) {
    if (bytes.size() < kHeaderSize + kTrailerSize) {
        throw WeightsTruncatedError("weights file truncated: " + std::to_string(bytes.size()) + " bytes");
    }
    if (bytes.substr(0, kMagic.size()) != kMagic) throw WeightsFormatError("not a weights file (bad magic)");

    const auto stored_crc = get<std::uint32_t>(bytes, bytes.size() - kTrailerSize);
    const bool crc_ok = crc32c(bytes.substr(0, bytes.size() - kTrailerSize)) == stored_crc;

    const auto manifest_len = get<std::uint64_t>(bytes, kMagic.size());
    if (manifest_len > bytes.size() - kHeaderSize - kTrailerSize) {
        if (!crc_ok && manifest_len > (1ULL << 40)) throw WeightsChecksumError("weights checksum mismatch");
        throw WeightsTruncatedError("weights file truncated inside the manifest");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(kHeaderSize, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        if (!crc_ok) throw WeightsChecksumError("weights checksum mismatch (manifest unreadable)");
        throw WeightsFormatError(std::string("weights manifest is not valid JSON: ") + e.what());
    }

    try {
        std::size_t blob_bytes = 0;
        for (const auto& t : manifest.at("tensors")) {
            blob_bytes = std::max(blob_bytes, t.at("offset").get<std::size_t>() + t.at("length").get<std::size_t>());
        }
        const std::size_t expected = kHeaderSize + manifest_len + blob_bytes + kTrailerSize;
        if (bytes.size() < expected) {
            throw WeightsTruncatedError("weights file truncated: " + std::to_string(bytes.size()) + " of " +
                                        std::to_string(expected) + " bytes");
        }
        if (bytes.size() > expected) throw WeightsFormatError("weights file has trailing bytes");
        if (!crc_ok) throw WeightsChecksumError("weights checksum mismatch");

        const int version = manifest.at("format_version").get<int>();
        if (version != kWeightsFormatVersion) {
            throw WeightsVersionError(version, "unsupported weights format version " + std::to_string(version) +
                                                   " (this build reads version " +
                                                   std::to_string(kWeightsFormatVersion) + ")");
        }

        ModelWeights w;
        w.architecture = parse_architecture(manifest.at("architecture").get<std::string>());
        w.config = config_from_json(w.architecture, manifest.at("config"));
        const auto& d = manifest.at("dims");
        w.dims = {d.at("vocab_size").get<std::size_t>(), d.at("n_classes").get<std::size_t>(),
                  d.at("max_len").get<std::size_t>()};
        w.vocab_hash = manifest.at("vocab_hash").get<std::string>();
        w.class_list = manifest.at("class_list").get<std::vector<std::string>>();
        w.metadata = metadata_from_json(manifest.at("metadata"));
        w.semantic_version = manifest.at("semantic_version").get<std::string>();

        const std::size_t blob_start = kHeaderSize + manifest_len;
        for (const auto& t : manifest.at("tensors")) {
            Shape shape = t.at("shape").get<Shape>();
            const auto off = t.at("offset").get<std::size_t>();
            const auto len = t.at("length").get<std::size_t>();
            if (len != shape_size(shape) * sizeof(double)) {
                throw WeightsFormatError("tensor " + t.at("name").get<std::string>() + " length does not match shape");
            }
            std::vector<double> values(shape_size(shape));
            std::memcpy(values.data(), bytes.data() + blob_start + off, len);
            w.tensors.push_back({t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
        }
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw WeightsFormatError(std::string("malformed weights manifest: ") + e.what());
    }
}

void save_weights(const ModelWeights& w, const fs::path& path) { write_file_atomic(path, serialize_weights(w)); }

ModelWeights load_weights(const fs::path& path) { return deserialize_weights(read_file(path)); }

std::string weights_hash(const ModelWeights& w) { return to_hex(fnv1a64(serialize_weights(w))); }

}  // namespace hscls
