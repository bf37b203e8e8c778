#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"
#include "support/batches.hpp"
#include "support/logistic.hpp"
#include "support/quadratic.hpp"

namespace scala::diag {
namespace {

using testing::diagonal;
using testing::quadratic;
using testing::random_symmetric;

SharpnessOptions power_opts(std::size_t iters, double tol, std::uint64_t seed = 0) {
    SharpnessOptions o;
    o.max_iters = iters;
    o.tol = tol;
    o.seed = seed;
    return o;
}

double dominant_eigenvalue(const testing::SymMatrix& m) {
    Eigen::MatrixXd a(m.n, m.n);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j)
            a(i, j) = m(i, j);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
    return std::abs(ev(0)) > std::abs(ev(ev.size() - 1)) ? ev(0) : ev(ev.size() - 1);
}

TEST(Sharpness, DiagonalSpectrum) {
    const std::vector<double> x(3, 0.5);
    const SharpnessResult r = sharpness(quadratic(diagonal({3.0, 1.0, -2.0})), x, power_opts(500, 1e-12));
    EXPECT_NEAR(r.eigenvalue, 3.0, 1e-6);
    EXPECT_FALSE(r.negative);
}

TEST(Sharpness, IdentityConvergesImmediately) {
    const std::vector<double> x(6, 0.1);
    const SharpnessResult r = sharpness(quadratic(diagonal(std::vector<double>(6, 1.0))), x);
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.rayleigh_trace.size(), 1u);
    EXPECT_NEAR(r.eigenvalue, 1.0, 1e-9);
}

TEST(Sharpness, MatchesDenseOracle) {
    std::mt19937_64 rng(1);
    for (std::size_t n : {5u, 12u, 25u, 50u}) {
        for (int rep = 0; rep < 3; ++rep) {
            const testing::SymMatrix m = random_symmetric(n, rng);
            const std::vector<double> x(n, 0.3);
            const SharpnessResult r = sharpness(quadratic(m), x, power_opts(5000, 1e-10, 7));
            const double oracle = dominant_eigenvalue(m);
            EXPECT_NEAR(r.eigenvalue, oracle, 0.01 * std::abs(oracle)) << "n=" << n;
        }
    }
}

TEST(Sharpness, QuotientsNondecreasingOnPsd) {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 5; ++rep) {
        const testing::SymMatrix b = random_symmetric(20, rng);
        testing::SymMatrix m{20, std::vector<double>(400, 0.0)};
        for (std::size_t i = 0; i < 20; ++i)
            for (std::size_t j = 0; j < 20; ++j)
                for (std::size_t k = 0; k < 20; ++k)
                    m.a[i * 20 + j] += b(i, k) * b(j, k) / 20.0;
        const std::vector<double> x(20, 0.0);
        const SharpnessResult r = sharpness(quadratic(m), x, power_opts(200, 1e-12, 3));
        for (std::size_t k = 2; k < r.rayleigh_trace.size(); ++k)
            EXPECT_GE(std::abs(r.rayleigh_trace[k]), std::abs(r.rayleigh_trace[k - 1]) - 1e-9);
    }
}

TEST(Sharpness, NegativeDominantIsFlaggedAndShifted) {
    const std::vector<double> x(3, 0.0);
    const SharpnessResult r = sharpness(quadratic(diagonal({1.0, 0.5, -4.0})), x, [] {
        SharpnessOptions o = power_opts(2000, 1e-12);
        o.shift_negative = true;
        return o;
    }());
    EXPECT_NEAR(r.eigenvalue, -4.0, 1e-6);
    EXPECT_TRUE(r.negative);
    ASSERT_TRUE(r.largest_algebraic.has_value());
    EXPECT_NEAR(*r.largest_algebraic, 1.0, 1e-5);
    EXPECT_NEAR(r.top(), 1.0, 1e-5);
}

TEST(Sharpness, ZeroHessianThrowsAfterRestarts) {
    const std::vector<double> x(4, 1.0);
    EXPECT_THROW(sharpness(quadratic(diagonal(std::vector<double>(4, 0.0))), x), NumericalError);
}

TEST(Sharpness, ModelObjectiveRuns) {
    std::mt19937_64 rng(4);
    const model::Model m = model::Model::init(testing::small_token_arch(), 3);
    const model::Batch b = testing::random_token_batch(m.arch(), 16, rng);
    const SharpnessResult r1 = sharpness(m, b, power_opts(50, 1e-6));
    const SharpnessResult r2 = sharpness(m, b, power_opts(50, 1e-6));
    EXPECT_EQ(r1.eigenvalue, r2.eigenvalue);
    EXPECT_TRUE(std::isfinite(r1.eigenvalue));
}

TEST(ProbeAlpha, ScalarQuadraticExact) {
    const std::vector<double> x{1.0};
    const auto groups = single_group(1);
    const std::vector<double> a = probe_alpha(quadratic(diagonal({2.0})), x, groups);
    EXPECT_NEAR(a[0], 2.0, 1e-8);
}

TEST(ProbeAlpha, GroupBlocksOfDenseQuadratic) {
    std::mt19937_64 rng(5);
    const testing::SymMatrix m = random_symmetric(9, rng);
    const std::vector<GroupRange> groups{{0, 4}, {4, 5}};
    const std::vector<double> x(9, 0.2);
    for (double radius : {1e-2, 5e-3}) {
        const std::vector<double> a = probe_alpha(quadratic(m), x, groups, AlphaProbeOptions{500, radius, 0});
        for (std::size_t k = 0; k < groups.size(); ++k) {
            testing::SymMatrix block{groups[k].size, {}};
            for (std::size_t i = 0; i < block.n; ++i)
                for (std::size_t j = 0; j < block.n; ++j)
                    block.a.push_back(m(groups[k].offset + i, groups[k].offset + j));
            EXPECT_NEAR(a[k], std::abs(dominant_eigenvalue(block)), 1e-8) << "radius " << radius;
        }
    }
}

TEST(ProbeAlpha, LinearLossGivesZero) {
    auto linear = [](std::span<const double>, std::span<double> g) {
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = double(i) + 1.0;
        return 0.0;
    };
    const std::vector<double> x(4, 0.3);
    const std::vector<GroupRange> groups{{0, 2}, {2, 2}};
    for (double a : probe_alpha(linear, x, groups))
        EXPECT_EQ(a, 0.0);
}

TEST(Moreau, ScalarQuadraticAnalytic) {
    const std::vector<double> x{1.0};
    const auto groups = single_group(1);
    const std::vector<double> alpha{2.0};
    const MoreauProbeResult r = moreau_grad(quadratic(diagonal({2.0})), x, groups, alpha);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.residual, 1e-10);
    EXPECT_NEAR(r.gradient[0], 2.0 / 1.5, 1e-6);
    EXPECT_NEAR(r.prox_point[0], 1.0 / 1.5, 1e-6);
    EXPECT_NEAR(r.squared_norm, (2.0 / 1.5) * (2.0 / 1.5), 1e-6);
}

TEST(Moreau, GroupwiseIdentityAndStationaryPoint) {
    std::mt19937_64 rng(6);
    const auto f = testing::logistic_objective(5, 40, 3);
    const std::vector<GroupRange> groups{{0, 2}, {2, 3}};
    const std::vector<double> alpha{1.5, 3.0};
    const std::vector<double> x{0.3, -0.2, 0.5, 0.1, -0.4};
    const MoreauProbeResult r = moreau_grad(f, x, groups, alpha);
    ASSERT_TRUE(r.converged);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = groups[k].offset; j < groups[k].offset + groups[k].size; ++j) {
            EXPECT_EQ(r.gradient[j], 2.0 * alpha[k] * (x[j] - r.prox_point[j]));
            // |prox - x| <= mu * |grad|
            EXPECT_LE(std::abs(r.prox_point[j] - x[j]), 1.0 / (2.0 * alpha[k]) * std::abs(r.gradient[j]) + 1e-15);
        }

    // Minimize the convex loss, then probe there.
    std::vector<double> w(5, 0.0), g(5);
    for (int it = 0; it < 20000; ++it) {
        f(w, g);
        for (std::size_t j = 0; j < 5; ++j)
            w[j] -= 0.5 * g[j];
    }
    const MoreauProbeResult at_min = moreau_grad(f, w, groups, alpha);
    EXPECT_LT(at_min.squared_norm, 1e-12);
}

TEST(WeakConvexity, LemmaExamples) {
    auto neg_sq = [](std::span<const double> x, std::span<double> g) {
        double v = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            v -= x[i] * x[i];
            g[i] = -2.0 * x[i];
        }
        return v;
    };
    const std::vector<double> x(6, 0.25);
    const std::vector<GroupRange> groups{{0, 3}, {3, 3}};
    const WeakConvexityResult at_two = weak_convexity_check(neg_sq, x, groups, std::vector<double>{2.0, 2.0}, 50);
    EXPECT_TRUE(at_two.pass);
    EXPECT_LT(std::abs(at_two.worst_violation), 1e-14);
    EXPECT_FALSE(weak_convexity_check(neg_sq, x, groups, std::vector<double>{1.0, 1.0}, 50).pass);

    const auto logistic = testing::logistic_objective(6, 50, 9);
    const std::vector<double> probed = probe_alpha(logistic, x, groups);
    EXPECT_TRUE(weak_convexity_check(logistic, x, groups, probed, 200).pass);
    EXPECT_TRUE(weak_convexity_check(logistic, x, groups, std::vector<double>{0.0, 0.0}, 200).pass);
}

TEST(RateCalculator, HandExamples) {
    TheoryConstants c;
    c.alpha = {2.0, 0.5};
    c.clip_hi = 10.0;
    c.clip_lo = 1.0;
    c.Z = 0.5;
    c.eps_inner = 0.01;
    c.D = 1.0;
    c.G = 1.0;
    const RatePlan p = rate_calculator(c, 100);
    EXPECT_EQ(p.eta, 0.01);
    EXPECT_DOUBLE_EQ(p.batch_size, 4.0);
    EXPECT_DOUBLE_EQ(p.bound, 0.88);

    TheoryConstants inner;
    inner.alpha = {1.0};
    inner.C = 1.0;
    inner.S = 1.5;
    inner.eps_inner = 0.08;
    EXPECT_EQ(rate_calculator(inner, 100).inner_iters, std::optional<std::size_t>(10));
    inner.S = 2.0;
    const RatePlan undefined = rate_calculator(inner, 100);
    EXPECT_FALSE(undefined.inner_iters.has_value());
    EXPECT_FALSE(undefined.inner_iters_note.empty());
}

TEST(RateCalculator, PureAndValidated) {
    TheoryConstants c;
    c.alpha = {3.0, 1.0, 2.0};
    const RatePlan a = rate_calculator(c, 37), b = rate_calculator(c, 37);
    EXPECT_EQ(a.eta, b.eta);
    EXPECT_EQ(a.bound, b.bound);
    EXPECT_EQ(a.batch_size, b.batch_size);
    EXPECT_EQ(c.kappa(), 3.0);
    c.alpha = {};
    EXPECT_THROW(rate_calculator(c, 10), ConfigError);
}

TEST(TheoryEstimator, Recipes) {
    TheoryEstimator est({{0, 2}, {2, 1}});
    est.observe_gradient(std::vector<double>{0.5, -2.0, 1.0});
    const std::vector<std::vector<double>> micro{{1.0, 0.0, 0.0}, {-1.0, 0.0, 2.0}};
    est.observe_spread(micro, std::vector<double>{0.0, 0.0, 1.0});
    est.set_initial_gap(3.0);
    est.observe_loss(2.0);
    est.observe_loss(1.5);
    const TheoryConstants c = est.estimate({1.0, 1.0}, 0.01, 1.0, 1.0, 0.0, 10.0);
    EXPECT_EQ(c.G, 2.0);
    EXPECT_DOUBLE_EQ(c.sigma[0], 1.0);
    EXPECT_DOUBLE_EQ(c.sigma[1], 1.0);
    EXPECT_DOUBLE_EQ(c.D, 1.5);
    EXPECT_EQ(est.recipes().size(), 4u);
}

} // namespace
} // namespace scala::diag
