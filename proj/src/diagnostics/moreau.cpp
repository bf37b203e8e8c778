#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"

namespace scala::diag {
namespace {

void check_alpha(std::span<const GroupRange> groups, std::span<const double> alpha) {
    if (alpha.size() != groups.size())
        throw ShapeError("alpha has " + std::to_string(alpha.size()) + " entries for " +
                         std::to_string(groups.size()) + " groups");
}

} // namespace

MoreauProbeResult moreau_grad(const ad::Objective& g, std::span<const double> x, std::span<const GroupRange> groups,
                              std::span<const double> alpha, const MoreauOptions& opts) {
    check_alpha(groups, alpha);
    for (double a : alpha)
        if (!(a > 0.0))
            throw std::invalid_argument("moreau_grad: alpha must be positive");

    const double alpha_max = *std::max_element(alpha.begin(), alpha.end());
    double lr = 0.0;
    if (opts.inner_lr) {
        lr = *opts.inner_lr;
    } else {
        const std::vector<GroupRange> whole = single_group(x.size());
        const double smooth = opts.smoothness ? *opts.smoothness : probe_alpha(g, x, whole).front();
        lr = 1.0 / (2.0 * (alpha_max + smooth));
    }

    const std::size_t n = x.size();
    std::vector<double> z(x.begin(), x.end()), grad(n), step(n);
    MoreauProbeResult res;
    auto inner_gradient = [&]() {
        const double value = g(z, grad);
        double quad = 0.0, sq = 0.0;
        for (std::size_t k = 0; k < groups.size(); ++k) {
            for (std::size_t j = groups[k].offset; j < groups[k].offset + groups[k].size; ++j) {
                const double dz = z[j] - x[j];
                quad += alpha[k] * dz * dz;
                step[j] = grad[j] + 2.0 * alpha[k] * dz;
                sq += step[j] * step[j];
            }
        }
        if (!std::isfinite(value) || !std::isfinite(sq))
            throw NumericalError("moreau_grad: inner solve diverged");
        res.envelope = value + quad;
        return std::sqrt(sq);
    };

    res.residual = inner_gradient();
    while (res.residual >= opts.tol && res.iterations < opts.max_iters) {
        for (std::size_t j = 0; j < n; ++j)
            z[j] -= lr * step[j];
        ++res.iterations;
        res.residual = inner_gradient();
    }
    res.converged = res.residual < opts.tol;

    res.gradient.assign(n, 0.0);
    for (std::size_t k = 0; k < groups.size(); ++k)
        for (std::size_t j = groups[k].offset; j < groups[k].offset + groups[k].size; ++j)
            res.gradient[j] = 2.0 * alpha[k] * (x[j] - z[j]);
    for (double v : res.gradient)
        res.squared_norm += v * v;
    res.prox_point = std::move(z);
    return res;
}

WeakConvexityResult weak_convexity_check(const ad::Objective& g, std::span<const double> x,
                                         std::span<const GroupRange> groups, std::span<const double> alpha,
                                         std::size_t n_segments, double radius, std::uint64_t seed, double tol) {
    check_alpha(groups, alpha);
    const std::size_t n = x.size();
    std::vector<double> scratch(n);
    auto h = [&](std::span<const double> z) {
        double v = g(z, scratch);
        for (std::size_t k = 0; k < groups.size(); ++k) {
            double sq = 0.0;
            for (std::size_t j = groups[k].offset; j < groups[k].offset + groups[k].size; ++j)
                sq += z[j] * z[j];
            v += 0.5 * alpha[k] * sq;
        }
        return v;
    };

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-radius, radius);
    WeakConvexityResult res;
    res.worst_violation = -std::numeric_limits<double>::infinity();
    std::vector<double> a(n), b(n), mid(n);
    for (std::size_t s = 0; s < n_segments; ++s) {
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = x[j] + u(rng);
            b[j] = x[j] + u(rng);
            mid[j] = 0.5 * (a[j] + b[j]);
        }
        const double ha = h(a), hb = h(b), hm = h(mid);
        const double violation = hm - 0.5 * (ha + hb);
        res.worst_violation = std::max(res.worst_violation, violation);
        const double scale = 1.0 + std::max({std::abs(ha), std::abs(hb), std::abs(hm)});
        if (violation > tol * scale)
            res.pass = false;
        ++res.segments;
    }
    if (res.segments == 0)
        res.worst_violation = 0.0;
    return res;
}

} // namespace scala::diag
