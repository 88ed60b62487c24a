#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "hscls/tensor.hpp"

namespace hscls {

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t samples = 100;  // spread evenly across the parameters
    std::uint64_t seed = 0;
    /// Relative error is |a - n| / max(|a|, |n|, floor). Gradients below the
    /// floor are compared in absolute terms, since central differences
    /// cannot resolve them more finely than ~eps * |loss| / step.
    double denominator_floor = 1e-6;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates whose perturbation crossed a kink
    std::string worst_parameter;
    std::size_t worst_index = 0;
};

/// Compares the gradients already stored in `params` against central
/// differences (L(p+h) - L(p-h)) / 2h of `loss`. When `signature` is given,
/// a coordinate is skipped if either perturbation changes it (ReLU mask or
/// pooling argmax switched, i.e. the loss is not differentiable there).
/// Parameter values are restored exactly.
GradCheckReport finite_difference_check(const std::function<double()>& loss, std::span<Parameter* const> params,
                                        const GradCheckOptions& options = {},
                                        const std::function<std::uint64_t()>& signature = {});

}  // namespace hscls
