#include "hscls/optim.hpp"

#include <cmath>

namespace hscls {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(std::string_view s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) {
    if (!(spec_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

void Optimizer::step(std::span<Parameter* const> params) {
    for (const Parameter* p : params) {
        if (!p->grad.all_finite()) throw NonFiniteGradientError("non-finite gradient in parameter " + p->name);
        if (p->grad.shape() != p->value.shape()) throw std::invalid_argument("gradient shape mismatch for " + p->name);
    }
    ++step_;
    const double lr = spec_.learning_rate;
    if (spec_.kind == OptimizerKind::sgd) {
        for (Parameter* p : params) {
            for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= lr * p->grad[i];
            p->zero_grad();
        }
        return;
    }
    const double b1 = spec_.beta1, b2 = spec_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (Parameter* p : params) {
        auto [it, fresh] = moments_.try_emplace(p->name);
        if (fresh) it->second = {Tensor(p->value.shape()), Tensor(p->value.shape())};
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + spec_.epsilon);
        }
        p->zero_grad();
    }
}

}  // namespace hscls
