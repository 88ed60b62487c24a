#include "hscls/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "hscls/checksum.hpp"
#include "hscls/layers.hpp"
#include "hscls/rng.hpp"
#include "hscls/version.hpp"

namespace hscls {

std::string to_string(Architecture a) { return a == Architecture::dnn ? "dnn" : "text_cnn"; }

Architecture parse_architecture(std::string_view s) {
    if (s == "dnn") return Architecture::dnn;
    if (s == "text_cnn") return Architecture::text_cnn;
    throw std::invalid_argument("unknown model '" + std::string(s) + "' (expected dnn or text_cnn)");
}

// ---- configs ----------------------------------------------------------------

TextCnnConfig TextCnnConfig::paper_final() {
    TextCnnConfig c;
    c.kernel_sizes = {5};
    c.filters_per_kernel = 128;
    c.embedding_dim = 100;
    c.n_conv_blocks = 1;
    return c;
}

TextCnnConfig TextCnnConfig::prose_345() {
    TextCnnConfig c = paper_final();
    c.kernel_sizes = {3, 4, 5};
    return c;
}

void TextCnnConfig::validate() const {
    if (kernel_sizes.empty()) throw std::invalid_argument("text_cnn: at least one kernel size is required");
    for (auto k : kernel_sizes) {
        if (k == 0) throw std::invalid_argument("text_cnn: kernel size must be positive");
    }
    if (filters_per_kernel == 0 || embedding_dim == 0 || n_conv_blocks == 0) {
        throw std::invalid_argument("text_cnn: filters, embedding_dim and n_conv_blocks must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("text_cnn: dropout must lie in [0, 1)");
}

bool TextCnnConfig::within_search_space() const {
    bool ok = std::all_of(kernel_sizes.begin(), kernel_sizes.end(), [](auto k) { return k >= 1 && k <= 10; });
    ok = ok && (filters_per_kernel == 64 || filters_per_kernel == 128 || filters_per_kernel == 256);
    ok = ok && embedding_dim >= 50 && embedding_dim <= 150;
    return ok && n_conv_blocks >= 1 && n_conv_blocks <= 5;
}

DnnConfig DnnConfig::paper_final() {
    DnnConfig c;
    c.initial_neurons = 168;
    c.neuron_pct = 0.95;
    c.neuron_shrink = 0.466;
    c.dropout = 0.1;
    c.embedding_dim = 43;
    c.n_layer_cap = 8;
    return c;
}

DnnConfig DnnConfig::paper_base() {
    DnnConfig c;
    c.initial_neurons = 11;
    c.neuron_pct = 0.44;
    c.neuron_shrink = 0.31;
    c.dropout = 0.37;
    c.embedding_dim = 66;
    c.n_layer_cap = 8;
    return c;
}

void DnnConfig::validate() const {
    if (initial_neurons == 0 || embedding_dim == 0 || n_layer_cap == 0) {
        throw std::invalid_argument("dnn: initial_neurons, embedding_dim and n_layer_cap must be positive");
    }
    if (!(neuron_pct > 0.0 && neuron_pct <= 1.0)) throw std::invalid_argument("dnn: neuron_pct must lie in (0, 1]");
    if (!(neuron_shrink > 0.0 && neuron_shrink < 1.0)) throw std::invalid_argument("dnn: neuron_shrink must lie in (0, 1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dnn: dropout must lie in [0, 1)");
}

bool DnnConfig::within_search_space() const {
    return initial_neurons >= 11 && initial_neurons <= 174 && neuron_pct >= 0.35 && neuron_pct <= 1.0 &&
           neuron_shrink >= 0.25 && neuron_shrink <= 0.95 && dropout >= 0.10 && dropout <= 0.75 &&
           embedding_dim >= 11 && embedding_dim <= 87 && n_layer_cap >= 1 && n_layer_cap <= 15;
}

Architecture architecture_of(const ModelConfig& cfg) {
    return std::holds_alternative<DnnConfig>(cfg) ? Architecture::dnn : Architecture::text_cnn;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    if (const auto* d = std::get_if<DnnConfig>(&cfg)) {
        return {{"initial_neurons", d->initial_neurons}, {"neuron_pct", d->neuron_pct},
                {"neuron_shrink", d->neuron_shrink},     {"dropout", d->dropout},
                {"embedding_dim", d->embedding_dim},     {"n_layer_cap", d->n_layer_cap}};
    }
    const auto& t = std::get<TextCnnConfig>(cfg);
    return {{"kernel_sizes", t.kernel_sizes},   {"filters_per_kernel", t.filters_per_kernel},
            {"embedding_dim", t.embedding_dim}, {"dropout", t.dropout},
            {"n_conv_blocks", t.n_conv_blocks}};
}

namespace {

// Accepts fractional values for integer fields (tuner output, e.g. 11.01)
// and rounds them to the nearest integer.
std::size_t read_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    const double v = j.at(key).get<double>();
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("config field ") + key + " must be non-negative");
    return static_cast<std::size_t>(std::llround(v));
}

double read_real(const nlohmann::json& j, const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace

ModelConfig config_from_json(Architecture arch, const nlohmann::json& j) {
    if (arch == Architecture::dnn) {
        DnnConfig d = DnnConfig::paper_final();
        d.initial_neurons = read_count(j, "initial_neurons", d.initial_neurons);
        d.neuron_pct = read_real(j, "neuron_pct", d.neuron_pct);
        d.neuron_shrink = read_real(j, "neuron_shrink", d.neuron_shrink);
        d.dropout = read_real(j, "dropout", d.dropout);
        d.embedding_dim = read_count(j, "embedding_dim", d.embedding_dim);
        d.n_layer_cap = read_count(j, "n_layer_cap", d.n_layer_cap);
        d.validate();
        return d;
    }
    TextCnnConfig t = TextCnnConfig::prose_345();
    if (j.contains("kernel_sizes")) {
        t.kernel_sizes.clear();
        for (const auto& k : j.at("kernel_sizes")) t.kernel_sizes.push_back(static_cast<std::size_t>(std::llround(k.get<double>())));
    }
    t.filters_per_kernel = read_count(j, "filters_per_kernel", t.filters_per_kernel);
    t.embedding_dim = read_count(j, "embedding_dim", t.embedding_dim);
    t.dropout = read_real(j, "dropout", t.dropout);
    t.n_conv_blocks = read_count(j, "n_conv_blocks", t.n_conv_blocks);
    t.validate();
    return t;
}

ModelConfig preset_config(Architecture arch, std::string_view preset) {
    if (arch == Architecture::text_cnn) {
        if (preset == "paper_final") return TextCnnConfig::paper_final();
        if (preset == "prose_345") return TextCnnConfig::prose_345();
    } else {
        if (preset == "paper_final" || preset == "prose_345") return DnnConfig::paper_final();
        if (preset == "paper_base") return DnnConfig::paper_base();
    }
    throw std::invalid_argument("unknown preset '" + std::string(preset) + "' for " + to_string(arch));
}

std::vector<std::size_t> dnn_layer_plan(const DnnConfig& cfg) {
    cfg.validate();
    const auto budget = static_cast<std::size_t>(std::llround(cfg.neuron_pct * kNeuronBudget));
    std::vector<std::size_t> widths{cfg.initial_neurons};
    std::size_t used = cfg.initial_neurons;
    std::size_t w = cfg.initial_neurons;
    while (widths.size() < cfg.n_layer_cap) {
        w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(w) * cfg.neuron_shrink)));
        if (w < 2 || used + w > budget) break;
        widths.push_back(w);
        used += w;
    }
    return widths;
}

// ---- models -----------------------------------------------------------------

void Model::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::size_t Model::parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
}

namespace {

constexpr double kEmbeddingInitLimit = 0.05;

std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t n) {
    return fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
}

class DnnModel final : public Model {
public:
    DnnModel(const DnnConfig& cfg, ModelDims dims, std::uint64_t seed)
        : Model(dims),
          cfg_(cfg),
          embedding_("embedding.table", dims.vocab_size, cfg.embedding_dim),
          output_("output", plan_last(cfg, dims), dims.n_classes) {
        std::size_t in = dims.max_len * cfg.embedding_dim;
        const auto plan = dnn_layer_plan(cfg);
        for (std::size_t i = 0; i < plan.size(); ++i) {
            hidden_.emplace_back("dense" + std::to_string(i), in, plan[i]);
            relus_.emplace_back();
            dropouts_.emplace_back(cfg.dropout);
            in = plan[i];
        }
        Rng rng(derive_seed(seed, "init"));
        uniform_init(embedding_.table().value, kEmbeddingInitLimit, rng);
        for (auto& d : hidden_) glorot_uniform(d.weight().value, d.in_dim(), d.out_dim(), rng);
        glorot_uniform(output_.weight().value, output_.in_dim(), output_.out_dim(), rng);
    }

    Architecture architecture() const override { return Architecture::dnn; }
    ModelConfig config() const override { return cfg_; }

    Tensor forward(const IdBatch& ids, bool training, std::uint64_t dropout_seed) override {
        Tensor h = embedding_.forward(ids);
        h.reshape({ids.rows, ids.cols * cfg_.embedding_dim});
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            h = relus_[i].forward(hidden_[i].forward(h));
            h = dropouts_[i].forward(h, training, derive_seed(dropout_seed, i));
        }
        return output_.forward(h);
    }

    void backward(const Tensor& grad_logits) override {
        Tensor g = output_.backward(grad_logits);
        for (std::size_t i = hidden_.size(); i-- > 0;) {
            g = hidden_[i].backward(relus_[i].backward(dropouts_[i].backward(g)));
        }
        const std::size_t N = g.dim(0);
        g.reshape({N, dims_.max_len, cfg_.embedding_dim});
        embedding_.backward(g);
    }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> out{&embedding_.table()};
        for (auto& d : hidden_) {
            out.push_back(&d.weight());
            out.push_back(&d.bias());
        }
        out.push_back(&output_.weight());
        out.push_back(&output_.bias());
        return out;
    }

    std::uint64_t activation_signature() const override {
        std::uint64_t h = fnv1a64("");
        for (const auto& r : relus_) h = hash_bytes(h, r.mask().data(), r.mask().size());
        return h;
    }

private:
    static std::size_t plan_last(const DnnConfig& cfg, const ModelDims& dims) {
        if (dims.vocab_size < 2 || dims.n_classes < 1 || dims.max_len < 1) {
            throw std::invalid_argument("dnn: vocab_size >= 2, n_classes >= 1 and max_len >= 1 are required");
        }
        return dnn_layer_plan(cfg).back();
    }

    DnnConfig cfg_;
    Embedding embedding_;
    std::vector<Dense> hidden_;
    std::vector<Relu> relus_;
    std::vector<Dropout> dropouts_;
    Dense output_;
};

class TextCnnModel final : public Model {
public:
    TextCnnModel(const TextCnnConfig& cfg, ModelDims dims, std::uint64_t seed)
        : Model(dims),
          cfg_(checked(cfg, dims)),
          embedding_("embedding.table", dims.vocab_size, cfg.embedding_dim),
          dropout_(cfg.dropout),
          output_("output", cfg.kernel_sizes.size() * cfg.filters_per_kernel, dims.n_classes) {
        for (auto h : cfg.kernel_sizes) {
            Branch b;
            for (std::size_t blk = 0; blk < cfg.n_conv_blocks; ++blk) {
                const std::size_t in = blk == 0 ? cfg.embedding_dim : cfg.filters_per_kernel;
                b.convs.emplace_back("conv_k" + std::to_string(h) + "_b" + std::to_string(blk), h, in,
                                     cfg.filters_per_kernel);
                b.relus.emplace_back();
            }
            branches_.push_back(std::move(b));
        }
        Rng rng(derive_seed(seed, "init"));
        uniform_init(embedding_.table().value, kEmbeddingInitLimit, rng);
        for (auto& b : branches_) {
            for (auto& c : b.convs) {
                glorot_uniform(c.weight().value, c.kernel() * c.in_dim(), c.kernel() * c.filters(), rng);
            }
        }
        glorot_uniform(output_.weight().value, output_.in_dim(), output_.out_dim(), rng);
    }

    Architecture architecture() const override { return Architecture::text_cnn; }
    ModelConfig config() const override { return cfg_; }

    Tensor forward(const IdBatch& ids, bool training, std::uint64_t dropout_seed) override {
        const Tensor x = embedding_.forward(ids);
        std::vector<Tensor> pooled;
        pooled.reserve(branches_.size());
        for (auto& b : branches_) {
            Tensor h = b.relus[0].forward(b.convs[0].forward(x));
            for (std::size_t blk = 1; blk < b.convs.size(); ++blk) h = b.relus[blk].forward(b.convs[blk].forward(h));
            pooled.push_back(b.pool.forward(h));
        }
        Tensor z = concat_features(pooled);
        z = dropout_.forward(z, training, dropout_seed);
        return output_.forward(z);
    }

    void backward(const Tensor& grad_logits) override {
        Tensor g = dropout_.backward(output_.backward(grad_logits));
        std::vector<std::size_t> widths(branches_.size(), cfg_.filters_per_kernel);
        auto parts = split_features(g, widths);
        Tensor dx;
        for (std::size_t k = 0; k < branches_.size(); ++k) {
            auto& b = branches_[k];
            Tensor h = b.pool.backward(parts[k]);
            for (std::size_t blk = b.convs.size(); blk-- > 0;) h = b.convs[blk].backward(b.relus[blk].backward(h));
            if (k == 0) {
                dx = std::move(h);
            } else {
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += h[i];
            }
        }
        embedding_.backward(dx);
    }

    std::vector<Parameter*> parameters() override {
        std::vector<Parameter*> out{&embedding_.table()};
        for (auto& b : branches_) {
            for (auto& c : b.convs) {
                out.push_back(&c.weight());
                out.push_back(&c.bias());
            }
        }
        out.push_back(&output_.weight());
        out.push_back(&output_.bias());
        return out;
    }

    std::uint64_t activation_signature() const override {
        std::uint64_t h = fnv1a64("");
        for (const auto& b : branches_) {
            for (const auto& r : b.relus) h = hash_bytes(h, r.mask().data(), r.mask().size());
            const auto& am = b.pool.argmax();
            h = hash_bytes(h, am.data(), am.size() * sizeof(std::size_t));
        }
        return h;
    }

private:
    struct Branch {
        std::vector<Conv1d> convs;
        std::vector<Relu> relus;
        MaxPoolOverTime pool;
    };

    static const TextCnnConfig& checked(const TextCnnConfig& cfg, const ModelDims& dims) {
        cfg.validate();
        if (dims.vocab_size < 2 || dims.n_classes < 1) {
            throw std::invalid_argument("text_cnn: vocab_size >= 2 and n_classes >= 1 are required");
        }
        for (auto h : cfg.kernel_sizes) {
            if (cfg.n_conv_blocks * (h - 1) + 1 > dims.max_len) {
                throw std::invalid_argument("text_cnn: kernel size " + std::to_string(h) + " with " +
                                            std::to_string(cfg.n_conv_blocks) + " block(s) exceeds max_len " +
                                            std::to_string(dims.max_len));
            }
        }
        return cfg;
    }

    TextCnnConfig cfg_;
    Embedding embedding_;
    std::vector<Branch> branches_;
    Dropout dropout_;
    Dense output_;
};

}  // namespace

std::unique_ptr<Model> build_dnn(const DnnConfig& cfg, ModelDims dims, std::uint64_t seed) {
    return std::make_unique<DnnModel>(cfg, dims, seed);
}

std::unique_ptr<Model> build_text_cnn(const TextCnnConfig& cfg, ModelDims dims, std::uint64_t seed) {
    return std::make_unique<TextCnnModel>(cfg, dims, seed);
}

std::unique_ptr<Model> build_model(const ModelConfig& cfg, ModelDims dims, std::uint64_t seed) {
    if (const auto* d = std::get_if<DnnConfig>(&cfg)) return build_dnn(*d, dims, seed);
    return build_text_cnn(std::get<TextCnnConfig>(cfg), dims, seed);
}

IdBatch make_batch(std::span<const TokenSequence> seqs, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t end, std::size_t max_len) {
    IdBatch b;
    b.rows = end - begin;
    b.cols = max_len;
    b.ids.reserve(b.rows * max_len);
    for (std::size_t i = begin; i < end; ++i) {
        const auto& s = seqs[order.empty() ? i : order[i]];
        if (s.ids.size() != max_len) {
            throw std::invalid_argument("sequence " + s.original_record_id + " has length " +
                                        std::to_string(s.ids.size()) + ", expected " + std::to_string(max_len));
        }
        b.ids.insert(b.ids.end(), s.ids.begin(), s.ids.end());
    }
    return b;
}

// ---- weights ----------------------------------------------------------------

ModelWeights snapshot_weights(Model& model, std::string vocab_hash, std::vector<std::string> class_list,
                              TrainingMetadata metadata) {
    ModelWeights w;
    w.architecture = model.architecture();
    w.config = model.config();
    w.dims = model.dims();
    w.vocab_hash = std::move(vocab_hash);
    w.class_list = std::move(class_list);
    for (auto* p : model.parameters()) w.tensors.push_back({p->name, p->value});
    w.metadata = std::move(metadata);
    return w;
}

std::unique_ptr<Model> instantiate(const ModelWeights& weights) {
    if (architecture_of(weights.config) != weights.architecture) {
        throw std::invalid_argument("weights: architecture tag does not match config");
    }
    auto model = build_model(weights.config, weights.dims, 0);
    auto params = model->parameters();
    if (params.size() != weights.tensors.size()) {
        throw std::invalid_argument("weights: expected " + std::to_string(params.size()) + " tensors, found " +
                                    std::to_string(weights.tensors.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = weights.tensors[i];
        if (t.name != params[i]->name || t.value.shape() != params[i]->value.shape()) {
            throw std::invalid_argument("weights: tensor " + t.name + " " + shape_string(t.value.shape()) +
                                        " does not match " + params[i]->name + " " +
                                        shape_string(params[i]->value.shape()));
        }
        params[i]->value = t.value;
    }
    return model;
}

// ---- training ---------------------------------------------------------------

namespace {

std::string describe(const OptimizerSpec& o) {
    std::string s = to_string(o.kind);
    char buf[160];
    if (o.kind == OptimizerKind::adam) {
        std::snprintf(buf, sizeof buf, " lr=%g beta1=%g beta2=%g eps=%g", o.learning_rate, o.beta1, o.beta2, o.epsilon);
    } else {
        std::snprintf(buf, sizeof buf, " lr=%g", o.learning_rate);
    }
    return s + buf;
}

void check_labels(std::span<const TokenSequence> data, std::size_t n_classes, const char* which) {
    for (const auto& s : data) {
        if (s.label_id < 0 || static_cast<std::size_t>(s.label_id) >= n_classes) {
            throw std::invalid_argument(std::string(which) + " label " + std::to_string(s.label_id) +
                                        " outside the model's " + std::to_string(n_classes) + " classes");
        }
    }
}

}  // namespace

double evaluate_accuracy(Model& model, std::span<const TokenSequence> data) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    constexpr std::size_t kBatch = 256;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += kBatch) {
        const std::size_t end = std::min(data.size(), begin + kBatch);
        IdBatch b = make_batch(data, {}, begin, end, model.dims().max_len);
        Tensor logits = model.forward(b, false, 0);
        const std::size_t C = logits.dim(1);
        for (std::size_t n = 0; n < b.rows; ++n) {
            const double* row = logits.data() + n * C;
            auto arg = static_cast<std::int32_t>(std::max_element(row, row + C) - row);
            correct += arg == data[begin + n].label_id;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(Model& model, std::span<const TokenSequence> train_set, std::span<const TokenSequence> valid_set,
                  const TrainConfig& cfg, const TrainContext& ctx) {
    if (train_set.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.epochs == 0) throw std::invalid_argument("train: epochs must be at least 1");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be at least 1");
    const std::size_t C = model.dims().n_classes;
    check_labels(train_set, C, "training");
    check_labels(valid_set, C, "validation");
    std::unordered_set<std::int32_t> seen;
    for (const auto& s : train_set) seen.insert(s.label_id);
    for (const auto& s : valid_set) {
        if (!seen.contains(s.label_id)) {
            throw std::invalid_argument("train: validation class " + std::to_string(s.label_id) +
                                        " does not occur in the training set");
        }
    }

    Optimizer opt(cfg.optimizer);
    auto params = model.parameters();
    model.zero_grad();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingMetadata meta;
    meta.seed = cfg.seed;
    meta.optimizer = describe(cfg.optimizer);
    meta.tool_version = kToolVersion;
    meta.config_hash = ctx.config_hash;

    TrainResult result;
    std::vector<Tensor> best;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    std::vector<std::int32_t> labels;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, epoch));
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            IdBatch batch = make_batch(train_set, order, begin, end, model.dims().max_len);
            labels.clear();
            for (std::size_t i = begin; i < end; ++i) labels.push_back(train_set[order[i]].label_id);

            const std::uint64_t drop_seed = derive_seed(cfg.seed, (epoch << 32) | batch_no);
            Tensor probs = softmax(model.forward(batch, true, drop_seed));
            const double loss = cross_entropy_loss(probs, labels);
            if (!std::isfinite(loss)) {
                throw TrainingDivergedError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                            std::to_string(batch_no));
            }
            loss_sum += loss * static_cast<double>(end - begin);
            model.backward(softmax_cross_entropy_grad(probs, labels));
            try {
                opt.step(params);
            } catch (const NonFiniteGradientError& e) {
                throw TrainingDivergedError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.valid_accuracy = evaluate_accuracy(model, valid_set);
        result.history.push_back(stats);
        meta.epochs_run = epoch;
        meta.final_loss = stats.train_loss;

        if (valid_set.empty()) continue;
        if (stats.valid_accuracy > best_acc) {
            best_acc = stats.valid_accuracy;
            meta.best_epoch = epoch;
            since_best = 0;
            best.clear();
            for (auto* p : params) best.push_back(p->value);
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (!best.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    } else {
        meta.best_epoch = meta.epochs_run;
    }
    result.weights = snapshot_weights(model, ctx.vocab_hash, ctx.class_list, meta);
    return result;
}

// ---- prediction -------------------------------------------------------------

std::string to_string(ConfidenceBand b) {
    switch (b) {
        case ConfidenceBand::high: return "high";
        case ConfidenceBand::medium: return "medium";
        default: return "low";
    }
}

ConfidenceBand confidence_band(double confidence, const BandThresholds& t) {
    if (confidence >= t.high) return ConfidenceBand::high;
    if (confidence >= t.medium) return ConfidenceBand::medium;
    return ConfidenceBand::low;
}

std::vector<Prediction> predict(const ModelWeights& weights, std::span<const TokenSequence> inputs,
                                std::string_view vocab_hash, const BandThresholds& bands) {
    if (vocab_hash != weights.vocab_hash) {
        throw VocabularyMismatchError("inputs were tokenized with vocabulary " + std::string(vocab_hash) +
                                      " but the model was trained with " + weights.vocab_hash);
    }
    auto model = instantiate(weights);
    constexpr std::size_t kBatch = 256;
    std::vector<Prediction> out;
    out.reserve(inputs.size());
    for (std::size_t begin = 0; begin < inputs.size(); begin += kBatch) {
        const std::size_t end = std::min(inputs.size(), begin + kBatch);
        IdBatch b = make_batch(inputs, {}, begin, end, weights.dims.max_len);
        Tensor probs = softmax(model->forward(b, false, 0));
        const std::size_t C = probs.dim(1);
        for (std::size_t n = 0; n < b.rows; ++n) {
            Prediction p;
            p.probabilities.assign(probs.data() + n * C, probs.data() + (n + 1) * C);
            auto it = std::max_element(p.probabilities.begin(), p.probabilities.end());
            p.label_id = static_cast<std::int32_t>(it - p.probabilities.begin());
            p.confidence = *it;
            p.band = confidence_band(p.confidence, bands);
            if (static_cast<std::size_t>(p.label_id) < weights.class_list.size()) {
                p.code = weights.class_list[static_cast<std::size_t>(p.label_id)];
            }
            out.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace hscls
