#include "hscls/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace hscls {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapRowVec = Eigen::Map<const Eigen::RowVectorXd>;

void require_rank(const Tensor& t, std::size_t rank, const char* who) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(who) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_string(t.shape()));
    }
}

}  // namespace

// ---- Embedding --------------------------------------------------------------

Embedding::Embedding(std::string name, std::size_t vocab_size, std::size_t dim)
    : table_(std::move(name), Tensor({vocab_size, dim})) {}

Tensor Embedding::forward(const IdBatch& ids) {
    const std::size_t V = table_.value.dim(0), D = table_.value.dim(1);
    if (ids.ids.size() != ids.rows * ids.cols) throw std::invalid_argument("embedding: malformed id batch");
    Tensor out({ids.rows, ids.cols, D});
    for (std::size_t i = 0; i < ids.ids.size(); ++i) {
        const auto id = ids.ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= V) {
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside vocabulary of size " +
                                    std::to_string(V));
        }
        std::memcpy(out.data() + i * D, table_.value.data() + static_cast<std::size_t>(id) * D, D * sizeof(double));
    }
    ids_ = ids;
    return out;
}

void Embedding::backward(const Tensor& grad_out) {
    const std::size_t D = table_.value.dim(1);
    if (grad_out.size() != ids_.ids.size() * D) throw std::invalid_argument("embedding: gradient shape mismatch");
    for (std::size_t i = 0; i < ids_.ids.size(); ++i) {
        double* row = table_.grad.data() + static_cast<std::size_t>(ids_.ids[i]) * D;
        const double* g = grad_out.data() + i * D;
        for (std::size_t d = 0; d < D; ++d) row[d] += g[d];
    }
}

// ---- Conv1d -----------------------------------------------------------------

Conv1d::Conv1d(std::string name, std::size_t kernel, std::size_t in_dim, std::size_t filters)
    : kernel_(kernel),
      in_dim_(in_dim),
      filters_(filters),
      weight_(name + ".weight", Tensor({filters, kernel * in_dim})),
      bias_(name + ".bias", Tensor({filters})) {
    if (kernel == 0 || in_dim == 0 || filters == 0) throw std::invalid_argument("conv1d: zero-sized layer");
}

Tensor Conv1d::forward(const Tensor& x) {
    require_rank(x, 3, "conv1d");
    const std::size_t N = x.dim(0), L = x.dim(1), D = x.dim(2);
    if (D != in_dim_) throw std::invalid_argument("conv1d: input width " + std::to_string(D) + " != " + std::to_string(in_dim_));
    if (L < kernel_) {
        throw std::invalid_argument("conv1d: sequence length " + std::to_string(L) + " shorter than kernel " +
                                    std::to_string(kernel_));
    }
    const std::size_t T = L - kernel_ + 1, W = kernel_ * D;
    in_shape_ = x.shape();
    columns_.resize(N * T * W);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t t = 0; t < T; ++t) {
            std::memcpy(columns_.data() + (n * T + t) * W, x.data() + (n * L + t) * D, W * sizeof(double));
        }
    }
    Tensor out({N, T, filters_});
    ConstMapMat cols(columns_.data(), static_cast<Eigen::Index>(N * T), static_cast<Eigen::Index>(W));
    ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(W));
    ConstMapRowVec b(bias_.value.data(), static_cast<Eigen::Index>(filters_));
    MapMat y(out.data(), static_cast<Eigen::Index>(N * T), static_cast<Eigen::Index>(filters_));
    y.noalias() = cols * w.transpose();
    y.rowwise() += b;
    return out;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
    const std::size_t N = in_shape_.at(0), L = in_shape_[1], D = in_shape_[2];
    const std::size_t T = L - kernel_ + 1, W = kernel_ * D;
    if (grad_out.shape() != Shape{N, T, filters_}) throw std::invalid_argument("conv1d: gradient shape mismatch");
    const auto rows = static_cast<Eigen::Index>(N * T);
    ConstMapMat g(grad_out.data(), rows, static_cast<Eigen::Index>(filters_));
    ConstMapMat cols(columns_.data(), rows, static_cast<Eigen::Index>(W));
    ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(W));
    MapMat dw(weight_.grad.data(), static_cast<Eigen::Index>(filters_), static_cast<Eigen::Index>(W));
    Eigen::Map<Eigen::RowVectorXd> db(bias_.grad.data(), static_cast<Eigen::Index>(filters_));

    dw.noalias() += g.transpose() * cols;
    db += g.colwise().sum();
    RowMat dcols = g * w;

    Tensor dx(in_shape_);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t t = 0; t < T; ++t) {
            double* dst = dx.data() + (n * L + t) * D;
            const double* src = dcols.data() + (n * T + t) * W;
            for (std::size_t k = 0; k < W; ++k) dst[k] += src[k];
        }
    }
    return dx;
}

// ---- Relu -------------------------------------------------------------------

Tensor Relu::forward(const Tensor& x) {
    Tensor out(x.shape());
    mask_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool on = x[i] > 0.0;
        mask_[i] = on;
        out[i] = on ? x[i] : 0.0;
    }
    return out;
}

Tensor Relu::backward(const Tensor& grad_out) const {
    if (grad_out.size() != mask_.size()) throw std::invalid_argument("relu: gradient shape mismatch");
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < mask_.size(); ++i) dx[i] = mask_[i] ? grad_out[i] : 0.0;
    return dx;
}

// ---- MaxPoolOverTime --------------------------------------------------------

Tensor MaxPoolOverTime::forward(const Tensor& x) {
    require_rank(x, 3, "max_pool_over_time");
    const std::size_t N = x.dim(0), T = x.dim(1), F = x.dim(2);
    if (T == 0) throw std::invalid_argument("max_pool_over_time: empty time axis");
    in_shape_ = x.shape();
    argmax_.assign(N * F, 0);
    Tensor out({N, F});
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) {
            std::size_t best = 0;
            double v = x.at(n, 0, f);
            for (std::size_t t = 1; t < T; ++t) {
                if (x.at(n, t, f) > v) {
                    v = x.at(n, t, f);
                    best = t;
                }
            }
            out.at(n, f) = v;
            argmax_[n * F + f] = best;
        }
    }
    return out;
}

Tensor MaxPoolOverTime::backward(const Tensor& grad_out) const {
    const std::size_t N = in_shape_.at(0), F = in_shape_[2];
    if (grad_out.shape() != Shape{N, F}) throw std::invalid_argument("max_pool_over_time: gradient shape mismatch");
    Tensor dx(in_shape_);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) dx.at(n, argmax_[n * F + f], f) = grad_out.at(n, f);
    }
    return dx;
}

// ---- concat -----------------------------------------------------------------

Tensor concat_features(std::span<const Tensor> blocks) {
    if (blocks.empty()) throw std::invalid_argument("concat_features: no inputs");
    const std::size_t N = blocks.front().dim(0);
    std::size_t total = 0;
    for (const auto& b : blocks) {
        require_rank(b, 2, "concat_features");
        if (b.dim(0) != N) throw std::invalid_argument("concat_features: batch sizes differ");
        total += b.dim(1);
    }
    Tensor out({N, total});
    for (std::size_t n = 0; n < N; ++n) {
        double* dst = out.data() + n * total;
        for (const auto& b : blocks) {
            const std::size_t w = b.dim(1);
            std::memcpy(dst, b.data() + n * w, w * sizeof(double));
            dst += w;
        }
    }
    return out;
}

std::vector<Tensor> split_features(const Tensor& grad, std::span<const std::size_t> widths) {
    require_rank(grad, 2, "split_features");
    const std::size_t N = grad.dim(0), total = grad.dim(1);
    std::size_t sum = 0;
    for (auto w : widths) sum += w;
    if (sum != total) throw std::invalid_argument("split_features: widths do not cover the gradient");
    std::vector<Tensor> out;
    std::size_t offset = 0;
    for (auto w : widths) {
        Tensor part({N, w});
        for (std::size_t n = 0; n < N; ++n) {
            std::memcpy(part.data() + n * w, grad.data() + n * total + offset, w * sizeof(double));
        }
        out.push_back(std::move(part));
        offset += w;
    }
    return out;
}

// ---- Dense ------------------------------------------------------------------

Dense::Dense(std::string name, std::size_t in_dim, std::size_t out_dim)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      weight_(name + ".weight", Tensor({out_dim, in_dim})),
      bias_(name + ".bias", Tensor({out_dim})) {
    if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("dense: zero-sized layer");
}

Tensor Dense::forward(const Tensor& z) {
    require_rank(z, 2, "dense");
    if (z.dim(1) != in_dim_) {
        throw std::invalid_argument("dense: input width " + std::to_string(z.dim(1)) + " != " + std::to_string(in_dim_));
    }
    const auto N = static_cast<Eigen::Index>(z.dim(0));
    input_ = z;
    Tensor out({z.dim(0), out_dim_});
    ConstMapMat x(z.data(), N, static_cast<Eigen::Index>(in_dim_));
    ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(out_dim_), static_cast<Eigen::Index>(in_dim_));
    ConstMapRowVec b(bias_.value.data(), static_cast<Eigen::Index>(out_dim_));
    MapMat y(out.data(), N, static_cast<Eigen::Index>(out_dim_));
    y.noalias() = x * w.transpose();
    y.rowwise() += b;
    return out;
}

Tensor Dense::backward(const Tensor& grad_out) {
    const auto N = static_cast<Eigen::Index>(input_.dim(0));
    if (grad_out.shape() != Shape{input_.dim(0), out_dim_}) throw std::invalid_argument("dense: gradient shape mismatch");
    ConstMapMat g(grad_out.data(), N, static_cast<Eigen::Index>(out_dim_));
    ConstMapMat x(input_.data(), N, static_cast<Eigen::Index>(in_dim_));
    ConstMapMat w(weight_.value.data(), static_cast<Eigen::Index>(out_dim_), static_cast<Eigen::Index>(in_dim_));
    MapMat dw(weight_.grad.data(), static_cast<Eigen::Index>(out_dim_), static_cast<Eigen::Index>(in_dim_));
    Eigen::Map<Eigen::RowVectorXd> db(bias_.grad.data(), static_cast<Eigen::Index>(out_dim_));
    dw.noalias() += g.transpose() * x;
    db += g.colwise().sum();
    Tensor dz(input_.shape());
    MapMat dzm(dz.data(), N, static_cast<Eigen::Index>(in_dim_));
    dzm.noalias() = g * w;
    return dz;
}

// ---- Dropout ----------------------------------------------------------------

Dropout::Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, bool training, std::uint64_t seed) {
    active_ = training && rate_ > 0.0;
    if (!active_) return x;
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - rate_);
    scale_.resize(x.size());
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        scale_[i] = rng.uniform() < rate_ ? 0.0 : keep_scale;
        out[i] = x[i] * scale_[i];
    }
    return out;
}

Tensor Dropout::backward(const Tensor& grad_out) const {
    if (!active_) return grad_out;
    if (grad_out.size() != scale_.size()) throw std::invalid_argument("dropout: gradient shape mismatch");
    Tensor dx(grad_out.shape());
    for (std::size_t i = 0; i < scale_.size(); ++i) dx[i] = grad_out[i] * scale_[i];
    return dx;
}

// ---- softmax / cross-entropy ------------------------------------------------

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t N = logits.dim(0), C = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t n = 0; n < N; ++n) {
        const double* o = logits.data() + n * C;
        double* p = out.data() + n * C;
        const double m = *std::max_element(o, o + C);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += (p[c] = std::exp(o[c] - m));
        for (std::size_t c = 0; c < C; ++c) p[c] /= sum;
    }
    return out;
}

Tensor one_hot(std::span<const std::int32_t> labels, std::size_t classes) {
    Tensor out({labels.size(), classes});
    for (std::size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
            throw std::out_of_range("one_hot: label " + std::to_string(labels[n]) + " out of range");
        }
        out.at(n, static_cast<std::size_t>(labels[n])) = 1.0;
    }
    return out;
}

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<std::int32_t> labels_from_one_hot(const Tensor& targets) {
    require_rank(targets, 2, "cross_entropy_loss");
    const std::size_t N = targets.dim(0), C = targets.dim(1);
    std::vector<std::int32_t> labels(N);
    for (std::size_t n = 0; n < N; ++n) {
        int hot = -1;
        for (std::size_t c = 0; c < C; ++c) {
            const double v = targets.at(n, c);
            if (v == 1.0 && hot < 0) {
                hot = static_cast<int>(c);
            } else if (v != 0.0) {
                throw std::invalid_argument("cross_entropy_loss: target row " + std::to_string(n) + " is not one-hot");
            }
        }
        if (hot < 0) throw std::invalid_argument("cross_entropy_loss: target row " + std::to_string(n) + " is not one-hot");
        labels[n] = hot;
    }
    return labels;
}

}  // namespace

double cross_entropy_loss(const Tensor& probs, std::span<const std::int32_t> labels) {
    require_rank(probs, 2, "cross_entropy_loss");
    const std::size_t N = probs.dim(0), C = probs.dim(1);
    if (labels.size() != N) throw std::invalid_argument("cross_entropy_loss: label count mismatch");
    if (N == 0) throw std::invalid_argument("cross_entropy_loss: empty batch");
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= C) {
            throw std::out_of_range("cross_entropy_loss: label out of range");
        }
        total -= std::log(std::max(probs.at(n, static_cast<std::size_t>(labels[n])), kProbFloor));
    }
    return total / static_cast<double>(N);
}

double cross_entropy_loss(const Tensor& probs, const Tensor& targets) {
    if (probs.shape() != targets.shape()) throw std::invalid_argument("cross_entropy_loss: shape mismatch");
    auto labels = labels_from_one_hot(targets);
    return cross_entropy_loss(probs, labels);
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const std::int32_t> labels) {
    require_rank(probs, 2, "softmax_cross_entropy_grad");
    const std::size_t N = probs.dim(0), C = probs.dim(1);
    if (labels.size() != N) throw std::invalid_argument("softmax_cross_entropy_grad: label count mismatch");
    Tensor g = probs;
    const double inv_n = 1.0 / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
        g.at(n, static_cast<std::size_t>(labels[n])) -= 1.0;
        for (std::size_t c = 0; c < C; ++c) g.at(n, c) *= inv_n;
    }
    return g;
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    uniform_init(t, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

void uniform_init(Tensor& t, double limit, Rng& rng) {
    for (auto& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace hscls
