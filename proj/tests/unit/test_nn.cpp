#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "hscls/gradcheck.hpp"
#include "hscls/layers.hpp"
#include "hscls/optim.hpp"
#include "hscls/rng.hpp"
#include "hscls/tensor.hpp"

using namespace hscls;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    return std::inner_product(a.values().begin(), a.values().end(), b.values().begin(), 0.0);
}

// Central differences of f over every coordinate of `t`, written out directly
// rather than through finite_difference_check.
Tensor numeric_grad(Tensor& t, const std::function<double()>& f, double h = 1e-5) {
    Tensor g(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const double up = f();
        t[i] = keep - h;
        const double down = f();
        t[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

double max_rel_error(const Tensor& a, const Tensor& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double den = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
        worst = std::max(worst, std::abs(a[i] - b[i]) / den);
    }
    return worst;
}

}  // namespace

TEST_SUITE("nn_core") {

TEST_CASE("embedding lookup examples") {
    Embedding e("emb", 2, 2);
    e.table().value = Tensor::matrix({{1, 0}, {0, 1}});
    IdBatch one{1, 1, {0}};
    CHECK(e.forward(one) == Tensor({1, 1, 2}, {1, 0}));

    e.table().value = Tensor::matrix({{5, 6}, {7, 8}});
    IdBatch two{1, 2, {1, 0}};
    CHECK(e.forward(two) == Tensor({1, 2, 2}, {7, 8, 5, 6}));
}

TEST_CASE("embedding gradient accumulates repeated ids") {
    Embedding e("emb", 3, 2);
    IdBatch ids{1, 2, {2, 2}};
    e.forward(ids);
    e.backward(Tensor({1, 2, 2}, {1, 2, 10, 20}));
    CHECK(e.table().grad.at(2, 0) == 11);
    CHECK(e.table().grad.at(2, 1) == 22);
    CHECK(e.table().grad.at(0, 0) == 0);
}

TEST_CASE("conv1d hand example") {
    Conv1d conv("c", 2, 1, 1);
    conv.weight().value = Tensor::matrix({{1, -1}});
    const Tensor x({1, 3, 1}, {1, 3, 2});
    const auto c = conv.forward(x);
    CHECK(c.shape() == Shape{1, 2, 1});
    CHECK(c[0] == -2);
    CHECK(c[1] == 1);

    Relu relu;
    const auto r = relu.forward(c);
    CHECK(r == Tensor({1, 2, 1}, {0, 1}));
    MaxPoolOverTime pool;
    CHECK(pool.forward(r) == Tensor({1, 1}, {1}));
}

TEST_CASE("conv1d constant filter and full-width kernel") {
    Conv1d conv("c", 3, 2, 4);
    conv.bias().value.fill(0.5);
    Rng rng(1);
    const auto x = random_tensor({2, 3, 2}, rng);
    const auto c = conv.forward(x);
    CHECK(c.shape() == Shape{2, 1, 4});
    for (double v : c.values()) CHECK(v == 0.5);
}

TEST_CASE("relu and max-pool boundary rules") {
    Relu relu;
    const Tensor neg({1, 3, 1}, {-1, -2, -0.5});
    CHECK(relu.forward(neg) == Tensor({1, 3, 1}, {0, 0, 0}));
    const Tensor pos({1, 3, 1}, {0, 2, 0.5});
    CHECK(relu.forward(pos) == pos);
    const auto g = relu.backward(Tensor({1, 3, 1}, {1, 1, 1}));
    CHECK(g[0] == 0);  // subgradient at 0

    MaxPoolOverTime pool;
    const Tensor flat({1, 4, 1}, {3, 3, 3, 3});
    CHECK(pool.forward(flat)[0] == 3);
    const auto dx = pool.backward(Tensor({1, 1}, {2}));
    CHECK(dx == Tensor({1, 4, 1}, {2, 0, 0, 0}));

    const Tensor single({2, 1, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(pool.forward(single) == Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
}

TEST_CASE("max-pool backward conserves the incoming gradient per filter") {
    Rng rng(9);
    MaxPoolOverTime pool;
    const auto x = random_tensor({3, 7, 5}, rng);
    pool.forward(x);
    const auto gout = random_tensor({3, 5}, rng);
    const auto dx = pool.backward(gout);
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t f = 0; f < 5; ++f) {
            double s = 0;
            for (std::size_t t = 0; t < 7; ++t) s += dx.at(n, t, f);
            CHECK(s == doctest::Approx(gout.at(n, f)).epsilon(1e-15));
        }
    }
}

TEST_CASE("concat and split") {
    const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b({2, 4}, {7, 8, 9, 10, 11, 12, 13, 14});
    const std::vector<Tensor> blocks{a, b};
    const auto z = concat_features(blocks);
    CHECK(z.shape() == Shape{2, 7});
    CHECK(z.at(1, 3) == 11);
    const std::vector<Tensor> one{a};
    CHECK(concat_features(one) == a);
    const std::vector<std::size_t> widths{3, 4};
    const auto parts = split_features(z, widths);
    CHECK(parts[0] == a);
    CHECK(parts[1] == b);

    const std::vector<Tensor> three{Tensor({5, 128}), Tensor({5, 128}), Tensor({5, 128})};
    CHECK(concat_features(three).shape() == Shape{5, 384});
}

TEST_CASE("dense examples") {
    Dense d("d", 2, 2);
    d.weight().value = Tensor::matrix({{1, 1}, {0, 1}});
    d.bias().value = Tensor::vector({0, 1});
    CHECK(d.forward(Tensor::matrix({{1, 2}})) == Tensor::matrix({{3, 3}}));

    d.weight().value = Tensor::matrix({{1, 0}, {0, 1}});
    d.bias().value = Tensor::vector({0, 0});
    const auto z = Tensor::matrix({{0.25, -4}, {7, 1}});
    CHECK(d.forward(z) == z);

    d.weight().value.fill(0);
    d.bias().value = Tensor::vector({2, -1});
    CHECK(d.forward(z) == Tensor::matrix({{2, -1}, {2, -1}}));
}

TEST_CASE("dropout modes") {
    Rng rng(3);
    const auto x = random_tensor({4, 6}, rng);
    Dropout off(0.0);
    CHECK(off.forward(x, true, 1) == x);
    Dropout half(0.5);
    CHECK(half.forward(x, false, 1) == x);
    Dropout heavy(0.9);
    CHECK(heavy.forward(x, false, 1) == x);
    CHECK_THROWS(Dropout(1.0));
}

TEST_CASE("dropout preserves the expectation (Monte Carlo)") {
    Dropout d(0.5);
    const Tensor x({1, 8}, {1, 2, 3, 4, -1, -2, 0.5, 10});
    Tensor sum(x.shape());
    const int reps = 10000;
    for (int s = 0; s < reps; ++s) {
        const auto y = d.forward(x, true, derive_seed(42, static_cast<std::uint64_t>(s)));
        for (std::size_t i = 0; i < x.size(); ++i) sum[i] += y[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(std::abs(sum[i] / reps - x[i]) <= 0.02 * std::abs(x[i]));
    }
}

TEST_CASE("dropout backward reuses the forward mask") {
    Dropout d(0.3);
    const Tensor x({2, 5}, std::vector<double>(10, 1.0));
    const auto y = d.forward(x, true, 8);
    const auto g = d.backward(Tensor({2, 5}, std::vector<double>(10, 1.0)));
    CHECK(g == y);
}

TEST_CASE("softmax examples") {
    const auto a = softmax(Tensor::matrix({{0, 0}}));
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);
    const auto b = softmax(Tensor::matrix({{std::log(2.0), 0}}));
    CHECK(b[0] == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(b[1] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    const auto c = softmax(Tensor::matrix({{1000, 0}}));
    CHECK(c.all_finite());
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one and ignore logit shifts") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const auto logits = random_tensor({5, 7}, rng, 30.0);
        const auto p = softmax(logits);
        auto shifted = logits;
        for (std::size_t n = 0; n < 5; ++n) {
            const double c = rng.uniform(-50, 50);
            for (std::size_t j = 0; j < 7; ++j) shifted.at(n, j) += c;
        }
        const auto q = softmax(shifted);
        for (std::size_t n = 0; n < 5; ++n) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                s += p.at(n, j);
                CHECK(std::abs(p.at(n, j) - q.at(n, j)) <= 1e-12);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("cross-entropy examples") {
    const std::vector<std::int32_t> y0{0};
    CHECK(cross_entropy_loss(Tensor::matrix({{1, 0}}), y0) == 0.0);
    CHECK(cross_entropy_loss(Tensor::matrix({{0.5, 0.5}}), y0) == doctest::Approx(0.693147).epsilon(1e-6));
    const auto g = softmax_cross_entropy_grad(Tensor::matrix({{0.5, 0.5}}), y0);
    CHECK(g == Tensor::matrix({{-0.5, 0.5}}));
    CHECK_THROWS(cross_entropy_loss(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{0.5, 0.5}})));
}

TEST_CASE("fused softmax cross-entropy gradient matches the chain rule and numeric differentiation") {
    Rng rng(4);
    auto logits = random_tensor({3, 4}, rng, 3.0);
    const std::vector<std::int32_t> labels{2, 0, 3};
    const double N = 3;
    const auto p = softmax(logits);
    const auto fused = softmax_cross_entropy_grad(p, labels);

    // dL/dz_j = sum_k dL/dp_k * p_k (delta_kj - p_j), with dL/dp_k = -y_k / (N p_k).
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t j = 0; j < 4; ++j) {
            double g = 0;
            for (std::size_t k = 0; k < 4; ++k) {
                const double dl_dp = static_cast<std::int32_t>(k) == labels[n] ? -1.0 / (N * p.at(n, k)) : 0.0;
                g += dl_dp * p.at(n, k) * ((k == j ? 1.0 : 0.0) - p.at(n, j));
            }
            CHECK(std::abs(fused.at(n, j) - g) <= 1e-12);
        }
    }

    // Five-point stencil: truncation O(h^4) keeps the numeric error near 1e-13.
    auto loss = [&] { return cross_entropy_loss(softmax(logits), labels); };
    const double h = 1e-3;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double keep = logits[i];
        auto at = [&](double d) {
            logits[i] = keep + d;
            return loss();
        };
        const double numeric = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        logits[i] = keep;
        CHECK(std::abs(fused[i] - numeric) <= 1e-10);
    }
}

TEST_CASE("sgd and adam steps") {
    Parameter p("p", Tensor::vector({1.0}));
    p.grad[0] = 2.0;
    std::vector<Parameter*> ps{&p};
    Optimizer sgd({OptimizerKind::sgd, 0.1});
    sgd.step(ps);
    CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(p.grad[0] == 0.0);
    sgd.step(ps);
    CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));

    Parameter q("q", Tensor::vector({0.0}));
    q.grad[0] = 1.0;
    std::vector<Parameter*> qs{&q};
    Optimizer adam(OptimizerSpec{});
    adam.step(qs);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(q.value[0] == doctest::Approx(-1e-3 / (1 + 1e-8)).epsilon(1e-12));

    Parameter r("r", Tensor::vector({1.0}));
    r.grad[0] = std::nan("");
    std::vector<Parameter*> rs{&r};
    CHECK_THROWS_AS(adam.step(rs), NonFiniteGradientError);
    CHECK(r.value[0] == 1.0);
}

TEST_CASE("finite_difference_check on closed-form losses") {
    Parameter p("p", Tensor::vector({3.0}));
    std::vector<Parameter*> ps{&p};
    p.grad[0] = 6.0;
    auto rep = finite_difference_check([&] { return p.value[0] * p.value[0]; }, ps);
    CHECK(rep.max_relative_error < 1e-9);
    CHECK(p.value[0] == 3.0);

    p.grad[0] = 0.0;
    rep = finite_difference_check([] { return 4.2; }, ps);
    CHECK(rep.max_relative_error == 0.0);

    p.grad[0] = 7.0;
    rep = finite_difference_check([&] { return p.value[0] * p.value[0]; }, ps);
    CHECK(rep.max_relative_error > 0.1);
}

TEST_CASE("layer backward passes match direct central differences") {
    Rng rng(21);

    SUBCASE("dense") {
        Dense d("d", 5, 3);
        glorot_uniform(d.weight().value, 5, 3, rng);
        d.bias().value = random_tensor({3}, rng);
        auto x = random_tensor({4, 5}, rng);
        const auto r = random_tensor({4, 3}, rng);
        auto loss = [&] { return dot(d.forward(x), r); };
        d.forward(x);
        const auto dx = d.backward(r);
        CHECK(max_rel_error(dx, numeric_grad(x, loss)) < 1e-7);
        CHECK(max_rel_error(d.weight().grad, numeric_grad(d.weight().value, loss)) < 1e-7);
        CHECK(max_rel_error(d.bias().grad, numeric_grad(d.bias().value, loss)) < 1e-7);
    }

    SUBCASE("conv1d") {
        Conv1d c("c", 3, 4, 2);
        c.weight().value = random_tensor({2, 12}, rng);
        c.bias().value = random_tensor({2}, rng);
        auto x = random_tensor({2, 6, 4}, rng);
        const auto r = random_tensor({2, 4, 2}, rng);
        auto loss = [&] { return dot(c.forward(x), r); };
        c.forward(x);
        const auto dx = c.backward(r);
        CHECK(max_rel_error(dx, numeric_grad(x, loss)) < 1e-7);
        CHECK(max_rel_error(c.weight().grad, numeric_grad(c.weight().value, loss)) < 1e-7);
        CHECK(max_rel_error(c.bias().grad, numeric_grad(c.bias().value, loss)) < 1e-7);
    }

    SUBCASE("embedding") {
        Embedding e("e", 6, 3);
        e.table().value = random_tensor({6, 3}, rng);
        IdBatch ids{2, 4, {1, 5, 5, 0, 2, 2, 3, 1}};
        const auto r = random_tensor({2, 4, 3}, rng);
        auto loss = [&] { return dot(e.forward(ids), r); };
        e.forward(ids);
        e.backward(r);
        CHECK(max_rel_error(e.table().grad, numeric_grad(e.table().value, loss)) < 1e-7);
    }

    SUBCASE("relu and max-pool away from kinks") {
        // Values well separated from 0 and from each other so h = 1e-5
        // cannot flip a mask or an argmax.
        auto x = Tensor({1, 4, 2}, {0.5, -0.7, 1.5, 0.2, -0.3, 0.9, 2.5, -1.1});
        const auto r = Tensor({1, 2}, {0.3, -2.0});
        Relu relu;
        MaxPoolOverTime pool;
        auto loss = [&] { return dot(pool.forward(relu.forward(x)), r); };
        loss();
        const auto dx = relu.backward(pool.backward(r));
        CHECK(max_rel_error(dx, numeric_grad(x, loss)) < 1e-7);
    }
}

}  // TEST_SUITE
