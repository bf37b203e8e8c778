#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scala/autodiff/hvp.hpp"
#include "scala/autodiff/ops.hpp"
#include "scala/errors.hpp"
#include "support/fd_check.hpp"
#include "support/op_catalog.hpp"
#include "support/random.hpp"

using namespace scala;
using scala::testing::random_tensor;

TEST(Ops, ReluZeroesNegatives) {
    ad::Graph g;
    auto y = ad::relu(g.constant(ad::Tensor::vector({-1.0, 2.0})));
    EXPECT_EQ(y.value().values(), (std::vector<double>{0.0, 2.0}));
}

TEST(Ops, SoftmaxOfEqualLogitsIsUniform) {
    ad::Graph g;
    auto y = ad::softmax(g.constant(ad::Tensor::vector({0.0, 0.0})));
    EXPECT_EQ(y.value().values(), (std::vector<double>{0.5, 0.5}));
}

TEST(Ops, EmbeddingGathersRows) {
    ad::Graph g;
    auto table = g.constant(ad::Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
    const std::vector<std::size_t> ids{2, 0};
    auto y = ad::embedding(table, ids);
    EXPECT_EQ(y.value(), ad::Tensor::matrix({{5, 6}, {1, 2}}));
}

TEST(Ops, ShapeMismatchThrows) {
    ad::Graph g;
    auto a = g.constant(ad::Tensor(ad::Shape{2, 3}));
    auto b = g.constant(ad::Tensor(ad::Shape{2, 3}));
    EXPECT_THROW(ad::matmul(a, b), ShapeError);
    EXPECT_THROW(ad::add(a, g.constant(ad::Tensor(ad::Shape{3, 2}))), ShapeError);
    EXPECT_THROW(ad::add_bias(a, g.constant(ad::Tensor(ad::Shape{2}))), ShapeError);
}

TEST(Ops, NonFiniteOutputThrows) {
    ad::Graph g;
    EXPECT_THROW(ad::log(g.constant(ad::Tensor::vector({1.0, -1.0}))), NumericalError);
    EXPECT_THROW(ad::log(g.constant(ad::Tensor::vector({0.0}))), NumericalError);
}

TEST(Ops, EmbeddingRejectsOutOfRangeId) {
    ad::Graph g;
    auto table = g.constant(ad::Tensor(ad::Shape{3, 2}));
    const std::vector<std::size_t> ids{3};
    EXPECT_THROW(ad::embedding(table, ids), std::out_of_range);
}

TEST(Backward, SquareAtThree) {
    ad::Graph g;
    auto x = g.variable(ad::Tensor::scalar(3.0));
    auto grads = g.backward(ad::square(x));
    EXPECT_DOUBLE_EQ(grads.wrt(x).item(), 6.0);
}

TEST(Backward, CrossEntropyGradientIsSoftmaxMinusOneHot) {
    ad::Graph g;
    auto z = g.variable(ad::Tensor::matrix({{0.3, -1.2, 2.0}}));
    const std::vector<std::size_t> label{1};
    auto grads = g.backward(ad::softmax_cross_entropy(z, label));

    const double e0 = std::exp(0.3), e1 = std::exp(-1.2), e2 = std::exp(2.0), s = e0 + e1 + e2;
    const std::vector<double> expected{e0 / s, e1 / s - 1.0, e2 / s};
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR(grads.wrt(z)[i], expected[i], 1e-15);
}

TEST(Backward, SecondCallOnConsumedGraphThrows) {
    ad::Graph g;
    auto x = g.variable(ad::Tensor::scalar(1.0));
    auto loss = ad::square(x);
    g.backward(loss);
    EXPECT_THROW(g.backward(loss), std::logic_error);
    EXPECT_THROW(ad::square(x), std::logic_error);
}

TEST(Backward, NonScalarLossThrows) {
    ad::Graph g;
    auto x = g.variable(ad::Tensor::vector({1.0, 2.0}));
    EXPECT_THROW(g.backward(ad::square(x)), ShapeError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
    ad::Graph g;
    auto x = g.variable(ad::Tensor::scalar(2.0));
    auto c = g.constant(ad::Tensor::scalar(5.0));
    auto grads = g.backward(ad::mul(x, c));
    EXPECT_DOUBLE_EQ(grads.wrt(x).item(), 5.0);
    EXPECT_FALSE(grads.contains(c.id()));
}

TEST(Backward, UnusedVariableGetsZeroGradient) {
    ad::Graph g;
    auto x = g.variable(ad::Tensor::scalar(2.0));
    auto unused = g.variable(ad::Tensor::vector({1.0, 1.0}));
    auto grads = g.backward(ad::square(x));
    EXPECT_EQ(grads.wrt(unused).values(), (std::vector<double>{0.0, 0.0}));
}

// Every op against central differences, 20 random instances each.
TEST(Backward, EveryOpMatchesFiniteDifferences) {
    std::mt19937_64 rng(20240611);
    for (const auto& c : scala::testing::op_catalog()) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto inst = c.make(rng);
            const double err = scala::testing::gradient_check(inst.build, inst.inputs);
            EXPECT_LT(err, 1e-4) << c.name << " trial " << trial;
        }
    }
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<ad::Tensor> inputs{random_tensor({6, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5}, rng),
                                       random_tensor({5, 3}, rng), random_tensor({3}, rng)};
        const std::vector<std::size_t> labels{0, 2, 1, 1, 0, 2};
        auto build = [&](ad::Graph&, const std::vector<ad::Var>& l) {
            auto h = ad::tanh(ad::add_bias(ad::matmul(l[0], l[1]), l[2]));
            return ad::softmax_cross_entropy(ad::add_bias(ad::matmul(h, l[3]), l[4]), labels);
        };
        EXPECT_LT(scala::testing::gradient_check(build, inputs), 1e-4);
    }
}

TEST(Backward, IsLinearInTheLoss) {
    std::mt19937_64 rng(11);
    const ad::Tensor x0 = random_tensor({4, 3}, rng);
    const ad::Tensor w = random_tensor({3, 2}, rng);
    auto loss1 = [&](ad::Var x, ad::Graph& g) { return ad::sum(ad::tanh(ad::matmul(x, g.constant(w)))); };
    auto loss2 = [&](ad::Var x, ad::Graph&) { return ad::mean(ad::square(x)); };
    const double a = 0.37, b = -1.9;

    auto grad_of = [&](auto&& f) {
        ad::Graph g;
        auto x = g.variable(x0);
        return g.backward(f(x, g)).wrt(x);
    };
    const ad::Tensor g1 = grad_of(loss1);
    const ad::Tensor g2 = grad_of(loss2);
    const ad::Tensor combined =
        grad_of([&](ad::Var x, ad::Graph& g) { return ad::add(ad::scale(loss1(x, g), a), ad::scale(loss2(x, g), b)); });
    for (std::size_t i = 0; i < combined.size(); ++i)
        EXPECT_NEAR(combined[i], a * g1[i] + b * g2[i], 1e-12);
}

TEST(Backward, RepeatedEvaluationIsBitIdentical) {
    std::mt19937_64 rng(3);
    const ad::Tensor x0 = random_tensor({5, 4}, rng);
    const ad::Tensor w = random_tensor({4, 3}, rng);
    auto run = [&] {
        ad::Graph g;
        auto x = g.variable(x0);
        auto wv = g.variable(w);
        const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
        auto grads = g.backward(ad::softmax_cross_entropy(ad::tanh(ad::matmul(x, wv)), labels));
        return std::pair{grads.wrt(x), grads.wrt(wv)};
    };
    EXPECT_EQ(run(), run());
}

// ---------------------------------------------------------------------------
// Hessian-vector products

namespace {

// f(x) = 1/2 x^T A x, gradient A x.
ad::Objective quadratic(std::vector<double> a, std::size_t n) {
    return [a = std::move(a), n](std::span<const double> x, std::span<double> grad) {
        double value = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                row += a[i * n + j] * x[j];
            grad[i] = row;
            value += 0.5 * x[i] * row;
        }
        return value;
    };
}

} // namespace

TEST(Hvp, DiagonalQuadratic) {
    const auto f = quadratic({3, 0, 0, 1}, 2);
    const std::vector<double> x{0.4, -0.2}, v{1.0, 0.0};
    const auto hv = ad::hvp(f, x, v);
    EXPECT_NEAR(hv[0], 3.0, 1e-10);
    EXPECT_NEAR(hv[1], 0.0, 1e-10);
}

TEST(Hvp, RandomSymmetricMatchesDenseProduct) {
    std::mt19937_64 rng(99);
    const std::size_t n = 8;
    auto m = scala::testing::random_vector(n * n, rng);
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
    const auto x = scala::testing::random_vector(n, rng);
    const auto v = scala::testing::random_vector(n, rng);

    std::vector<double> av(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            av[i] += a[i * n + j] * v[j];

    const auto hv = ad::hvp(quadratic(a, n), x, v);
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_NEAR(hv[i], av[i], 1e-6);
}

TEST(Hvp, ZeroDirectionGivesZero) {
    const auto f = quadratic({2, 1, 1, 2}, 2);
    const std::vector<double> x{1.0, 2.0}, v{0.0, 0.0};
    EXPECT_EQ(ad::hvp(f, x, v), (std::vector<double>{0.0, 0.0}));
}

TEST(Hvp, RejectsBadArguments) {
    const auto f = quadratic({1}, 1);
    const std::vector<double> x{1.0}, v{1.0, 2.0}, v1{1.0};
    EXPECT_THROW(ad::hvp(f, x, v), ShapeError);
    EXPECT_THROW(ad::hvp(f, x, v1, 0.0), std::invalid_argument);
}

TEST(Hvp, DefaultEpsScalesWithInfinityNorm) {
    const std::vector<double> x{0.5, -3.0};
    EXPECT_DOUBLE_EQ(ad::default_hvp_eps(x), 4e-4);
}
