#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hscls/tensor.hpp"

namespace hscls {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class NonFiniteGradientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// First-order optimizer. Adam moments are keyed by parameter name, so the
/// same parameter set must be passed on every step. Gradients are zeroed
/// after a successful step.
class Optimizer {
public:
    explicit Optimizer(OptimizerSpec spec);

    /// Throws NonFiniteGradientError (leaving every value untouched) when any
    /// gradient entry is NaN or infinite.
    void step(std::span<Parameter* const> params);

    std::size_t steps() const { return step_; }
    const OptimizerSpec& spec() const { return spec_; }

private:
    struct Moments {
        Tensor m, v;
    };
    OptimizerSpec spec_;
    std::size_t step_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace hscls
