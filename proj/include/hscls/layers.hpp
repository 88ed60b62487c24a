#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hscls/rng.hpp"
#include "hscls/tensor.hpp"

namespace hscls {

// Layers cache whatever their backward pass needs during forward(); a layer
// instance therefore belongs to one thread at a time. backward() accumulates
// into Parameter::grad and returns the gradient with respect to the input.

/// Row lookup: ids N x L -> N x L x D.
class Embedding {
public:
    Embedding(std::string name, std::size_t vocab_size, std::size_t dim);

    Tensor forward(const IdBatch& ids);
    /// Scatter-adds grad rows into the table gradient; there is no input grad.
    void backward(const Tensor& grad_out);

    Parameter& table() { return table_; }
    const Parameter& table() const { return table_; }

private:
    Parameter table_;
    IdBatch ids_;
};

/// Valid 1-D convolution over the time axis. Each of the F filters is an
/// h x D matrix stored as one row of the F x (h*D) weight; the output at
/// position i is the Frobenius product of the filter with rows i..i+h-1 plus
/// the filter bias. N x L x D -> N x (L-h+1) x F.
class Conv1d {
public:
    Conv1d(std::string name, std::size_t kernel, std::size_t in_dim, std::size_t filters);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    std::size_t kernel() const { return kernel_; }
    std::size_t in_dim() const { return in_dim_; }
    std::size_t filters() const { return filters_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t kernel_, in_dim_, filters_;
    Parameter weight_;
    Parameter bias_;
    Shape in_shape_;
    std::vector<double> columns_;  // (N*T) x (h*D) unrolled windows
};

/// max(0, x); the subgradient at 0 is 0.
class Relu {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;
    const std::vector<std::uint8_t>& mask() const { return mask_; }

private:
    std::vector<std::uint8_t> mask_;
};

/// N x T x F -> N x F; ties resolve to the first maximal position.
class MaxPoolOverTime {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& grad_out) const;
    const std::vector<std::size_t>& argmax() const { return argmax_; }

private:
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

/// Concatenates N x F_k blocks along the feature axis, in argument order.
Tensor concat_features(std::span<const Tensor> blocks);
/// Inverse of concat_features for gradients.
std::vector<Tensor> split_features(const Tensor& grad, std::span<const std::size_t> widths);

/// o = z W^T + b with W stored C x M.
class Dense {
public:
    Dense(std::string name, std::size_t in_dim, std::size_t out_dim);

    Tensor forward(const Tensor& z);
    Tensor backward(const Tensor& grad_out);

    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return out_dim_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t in_dim_, out_dim_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

/// Inverted dropout. Training: each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); the mask comes from `seed`
/// and is reused by backward(). Inference: identity.
class Dropout {
public:
    explicit Dropout(double rate);

    Tensor forward(const Tensor& x, bool training, std::uint64_t seed);
    Tensor backward(const Tensor& grad_out) const;
    double rate() const { return rate_; }

private:
    double rate_;
    bool active_ = false;
    std::vector<double> scale_;
};

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

Tensor one_hot(std::span<const std::int32_t> labels, std::size_t classes);

/// Mean over the batch of -log(p_true), probabilities clamped to >= 1e-12.
/// Rejects rows of `targets` that are not one-hot.
double cross_entropy_loss(const Tensor& probs, const Tensor& targets);
double cross_entropy_loss(const Tensor& probs, std::span<const std::int32_t> labels);

/// Gradient of the batch-mean loss with respect to the logits for the fused
/// softmax + cross-entropy: (p - y) / N.
Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const std::int32_t> labels);

/// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);
void uniform_init(Tensor& t, double limit, Rng& rng);

}  // namespace hscls
