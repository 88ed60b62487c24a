#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hscls/corpus.hpp"
#include "hscls/optim.hpp"
#include "hscls/tensor.hpp"

namespace hscls {

enum class Architecture { dnn, text_cnn };

std::string to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

struct TextCnnConfig {
    std::vector<std::size_t> kernel_sizes{3, 4, 5};
    std::size_t filters_per_kernel = 128;
    std::size_t embedding_dim = 100;
    double dropout = 0.5;
    std::size_t n_conv_blocks = 1;

    /// Finalized tuning result: one branch of width 5, 128 filters, D = 100.
    static TextCnnConfig paper_final();
    /// Parallel trigram/four-gram/five-gram branches.
    static TextCnnConfig prose_345();

    /// Structural sanity (positive sizes, dropout in [0,1)); throws.
    void validate() const;
    /// Whether every value lies inside the tuning ranges (kernels 1-10,
    /// filters {64,128,256}, D 50-150, blocks 1-5).
    bool within_search_space() const;

    bool operator==(const TextCnnConfig&) const = default;
};

struct DnnConfig {
    std::size_t initial_neurons = 168;
    double neuron_pct = 0.95;
    double neuron_shrink = 0.466;
    double dropout = 0.1;
    std::size_t embedding_dim = 43;
    std::size_t n_layer_cap = 8;

    /// Tuned values for the up-sampled data set (rounded to integers).
    static DnnConfig paper_final();
    /// Tuned values for the base data set.
    static DnnConfig paper_base();

    void validate() const;
    /// initial 11-174, pct 0.35-1.0, shrink 0.25-0.95, dropout 0.10-0.75,
    /// D 11-87, layers 1-15.
    bool within_search_space() const;

    bool operator==(const DnnConfig&) const = default;
};

using ModelConfig = std::variant<DnnConfig, TextCnnConfig>;

Architecture architecture_of(const ModelConfig& cfg);
nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(Architecture arch, const nlohmann::json& j);

/// Named presets: "paper_final" and "prose_345" (Text-CNN), "paper_final"
/// and "paper_base" (DNN). prose_345 maps to paper_final for the DNN.
ModelConfig preset_config(Architecture arch, std::string_view preset);

/// Neuron budget B = round(neuron_pct * 5000). Widths start at
/// initial_neurons and shrink by round(w * neuron_shrink) (min 1). Layers are
/// emitted while the cumulative width stays within B, the count stays within
/// n_layer_cap and the width is at least 2; the first layer is always kept.
std::vector<std::size_t> dnn_layer_plan(const DnnConfig& cfg);

inline constexpr double kNeuronBudget = 5000.0;

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t n_classes = 0;
    std::size_t max_len = 0;

    bool operator==(const ModelDims&) const = default;
};

/// A fixed layer pipeline from token ids to class logits.
class Model {
public:
    virtual ~Model() = default;

    virtual Architecture architecture() const = 0;
    virtual ModelConfig config() const = 0;
    const ModelDims& dims() const { return dims_; }

    /// Logits N x C. Dropout masks derive from `dropout_seed` when training.
    virtual Tensor forward(const IdBatch& ids, bool training, std::uint64_t dropout_seed) = 0;
    /// Backpropagates dLoss/dlogits from the most recent forward().
    virtual void backward(const Tensor& grad_logits) = 0;
    virtual std::vector<Parameter*> parameters() = 0;

    /// Hash of the piecewise-linear region of the last forward (ReLU masks,
    /// pooling argmaxes). Equal signatures mean the loss is smooth between
    /// the two points' activations.
    virtual std::uint64_t activation_signature() const = 0;

    void zero_grad();
    std::size_t parameter_count();

protected:
    explicit Model(ModelDims dims) : dims_(dims) {}
    ModelDims dims_;
};

/// embedding(V x D) -> flatten(L*D) -> [dense + ReLU + dropout] per planned
/// layer -> dense(C). Glorot-uniform dense weights, U(-0.05, 0.05)
/// embeddings, zero biases.
std::unique_ptr<Model> build_dnn(const DnnConfig& cfg, ModelDims dims, std::uint64_t seed);

/// embedding -> per kernel size {conv1d + ReLU (x n_conv_blocks) -> max over
/// time} -> concat (K*F) -> dropout -> dense(C).
std::unique_ptr<Model> build_text_cnn(const TextCnnConfig& cfg, ModelDims dims, std::uint64_t seed);

std::unique_ptr<Model> build_model(const ModelConfig& cfg, ModelDims dims, std::uint64_t seed);

IdBatch make_batch(std::span<const TokenSequence> seqs, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t end, std::size_t max_len);

// ---- weights ----------------------------------------------------------------

struct NamedTensor {
    std::string name;
    Tensor value;

    bool operator==(const NamedTensor&) const = default;
};

struct TrainingMetadata {
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double final_loss = 0.0;
    std::string optimizer = "adam lr=0.001 beta1=0.9 beta2=0.999 eps=1e-08";
    std::string initializer = "glorot_uniform; embedding U(-0.05,0.05); zero bias";
    std::string tool_version;
    std::string config_hash;

    bool operator==(const TrainingMetadata&) const = default;
};

struct ModelWeights {
    Architecture architecture = Architecture::text_cnn;
    ModelConfig config = TextCnnConfig{};
    ModelDims dims;
    std::string vocab_hash;
    std::vector<std::string> class_list;
    std::vector<NamedTensor> tensors;
    TrainingMetadata metadata;
    std::string semantic_version = "1.0.0";

    bool operator==(const ModelWeights&) const = default;
};

class VocabularyMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

ModelWeights snapshot_weights(Model& model, std::string vocab_hash, std::vector<std::string> class_list,
                              TrainingMetadata metadata);

/// Rebuilds the architecture from the config and copies the stored tensors in.
std::unique_ptr<Model> instantiate(const ModelWeights& weights);

// ---- training / prediction --------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    OptimizerSpec optimizer{};
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 5;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_accuracy = 0.0;  // NaN when no validation set is given
};

struct TrainResult {
    ModelWeights weights;
    std::vector<EpochStats> history;
};

class TrainingDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainContext {
    std::string vocab_hash;
    std::vector<std::string> class_list;
    std::string config_hash;
};

/// Mini-batch training on the mean categorical cross-entropy. With a
/// validation set, training stops once validation accuracy has not improved
/// for early_stop_patience epochs and the best-validation weights are
/// returned; without one, the final weights are returned.
TrainResult train(Model& model, std::span<const TokenSequence> train_set, std::span<const TokenSequence> valid_set,
                  const TrainConfig& cfg, const TrainContext& ctx);

enum class ConfidenceBand { low, medium, high };

std::string to_string(ConfidenceBand b);

struct BandThresholds {
    double medium = 0.80;
    double high = 0.90;
};

ConfidenceBand confidence_band(double confidence, const BandThresholds& t = {});

struct Prediction {
    std::vector<double> probabilities;
    std::int32_t label_id = -1;
    std::string code;
    double confidence = 0.0;
    ConfidenceBand band = ConfidenceBand::low;
};

/// Dropout-free forward pass. `vocab_hash` identifies the vocabulary the
/// inputs were tokenized with and must equal weights.vocab_hash.
std::vector<Prediction> predict(const ModelWeights& weights, std::span<const TokenSequence> inputs,
                                std::string_view vocab_hash, const BandThresholds& bands = {});

/// Accuracy of argmax predictions from a live model (dropout off).
double evaluate_accuracy(Model& model, std::span<const TokenSequence> data);

}  // namespace hscls
