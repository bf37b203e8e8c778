#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"

namespace scala::diag {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

std::vector<double> random_unit(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(n);
    double nv = 0.0;
    while (nv == 0.0) {
        for (double& x : v)
            x = dist(rng);
        nv = norm(v);
    }
    for (double& x : v)
        x /= nv;
    return v;
}

// Largest-magnitude Ritz value of H on span{v0, v1}, given Hv0 and Hv1.
// Returns nullopt when the two vectors are numerically parallel.
std::optional<double> ritz_pair(std::span<const double> v0, std::span<const double> h0,
                                std::span<const double> v1, std::span<const double> h1) {
    const double s = dot(v0, v1);
    std::vector<double> u(v1.size()), hu(v1.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = v1[i] - s * v0[i];
        hu[i] = h1[i] - s * h0[i];
    }
    const double nu = norm(u);
    if (nu < 1e-10)
        return std::nullopt;
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] /= nu;
        hu[i] /= nu;
    }
    const double a = dot(v0, h0);
    const double b = 0.5 * (dot(u, h0) + dot(v0, hu));
    const double c = dot(u, hu);
    const double mid = 0.5 * (a + c);
    const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return std::abs(mid + rad) >= std::abs(mid - rad) ? mid + rad : mid - rad;
}

SharpnessResult power_iteration(const ad::Objective& f, std::span<const double> x, const SharpnessOptions& opts,
                                double shift, std::mt19937_64& rng) {
    const double eps = opts.hvp_eps.value_or(ad::default_hvp_eps(x));
    SharpnessResult res;
    std::vector<double> v = random_unit(x.size(), rng);
    std::vector<double> prev_v, prev_hv;
    double prev_estimate = 0.0;
    bool have_prev = false;
    for (std::size_t it = 0; it < opts.max_iters; ++it) {
        std::vector<double> hv = ad::hvp(f, x, v, eps);
        if (shift != 0.0)
            for (std::size_t i = 0; i < hv.size(); ++i)
                hv[i] += shift * v[i];
        const double nh = norm(hv);
        if (nh == 0.0) {
            if (res.restarts == opts.max_restarts)
                throw NumericalError("sharpness: Hessian-vector product vanished after " +
                                     std::to_string(opts.max_restarts) + " restarts");
            ++res.restarts;
            v = random_unit(x.size(), rng);
            have_prev = false;
            continue;
        }
        const double q = dot(v, hv);
        res.rayleigh_trace.push_back(q);
        res.iterations = res.rayleigh_trace.size();
        const double estimate = have_prev ? ritz_pair(prev_v, prev_hv, v, hv).value_or(q) : q;
        res.eigenvalue = estimate;

        double residual = 0.0;
        for (std::size_t i = 0; i < hv.size(); ++i)
            residual += (hv[i] - q * v[i]) * (hv[i] - q * v[i]);
        if (std::sqrt(residual) <= opts.tol * std::abs(q)) {
            res.eigenvalue = q;
            res.converged = true;
            break;
        }
        if (have_prev && std::abs(estimate - prev_estimate) < opts.tol * std::max(1.0, std::abs(estimate))) {
            res.converged = true;
            break;
        }
        prev_v = v;
        prev_hv = hv;
        prev_estimate = estimate;
        have_prev = true;
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = hv[i] / nh;
    }
    return res;
}

} // namespace

SharpnessResult sharpness(const ad::Objective& f, std::span<const double> x, const SharpnessOptions& opts) {
    if (opts.max_iters < 1)
        throw std::invalid_argument("sharpness: max_iters must be at least 1");
    if (x.empty())
        throw std::invalid_argument("sharpness: empty parameter vector");
    std::mt19937_64 rng(opts.seed);
    SharpnessResult res = power_iteration(f, x, opts, 0.0, rng);
    const double first = res.eigenvalue;
    std::optional<double> opposite;
    if (opts.check_opposite_end && first != 0.0) {
        try {
            const SharpnessResult other = power_iteration(f, x, opts, -first, rng);
            opposite = other.eigenvalue + first;
            res.iterations += other.iterations;
            res.converged = res.converged && other.converged;
        } catch (const NumericalError&) {
            // H - theta I vanished: the spectrum is the single point theta.
            opposite = first;
        }
        if (std::abs(*opposite) > std::abs(first))
            res.eigenvalue = *opposite;
    }
    res.negative = res.eigenvalue < 0.0;
    if (res.negative && opts.shift_negative) {
        if (opposite) {
            res.largest_algebraic = std::max(first, *opposite);
        } else {
            const double c = std::abs(res.eigenvalue);
            const SharpnessResult shifted = power_iteration(f, x, opts, c, rng);
            res.largest_algebraic = shifted.eigenvalue - c;
            res.iterations += shifted.iterations;
        }
    }
    return res;
}

SharpnessResult sharpness(const model::Model& model, const model::Batch& batch, const SharpnessOptions& opts) {
    return sharpness(task_objective(model, batch), model.parameters(), opts);
}

std::vector<double> probe_alpha(const ad::Objective& f, std::span<const double> x,
                                std::span<const GroupRange> groups, const AlphaProbeOptions& opts) {
    if (opts.n_probes < 1)
        throw std::invalid_argument("probe_alpha: n_probes must be at least 1");
    double inf_norm = 0.0;
    for (double v : x)
        inf_norm = std::max(inf_norm, std::abs(v));
    const double radius = opts.radius.value_or(1e-3 * (1.0 + inf_norm));
    if (!(radius > 0.0))
        throw std::invalid_argument("probe_alpha: radius must be positive");

    std::mt19937_64 rng(opts.seed);
    const std::size_t n = x.size();
    std::vector<double> g0(n), g1(n), xb(x.begin(), x.end());
    f(x, g0);

    std::vector<double> out;
    for (const GroupRange& grp : groups) {
        std::vector<double> d = random_unit(grp.size, rng);
        for (double& v : d)
            v *= radius;
        double best = 0.0;
        for (std::size_t p = 0; p < opts.n_probes; ++p) {
            for (std::size_t j = 0; j < grp.size; ++j)
                xb[grp.offset + j] = x[grp.offset + j] + d[j];
            f(xb, g1);
            double num = 0.0, den = 0.0;
            std::vector<double> diff(grp.size);
            for (std::size_t j = 0; j < grp.size; ++j) {
                diff[j] = g1[grp.offset + j] - g0[grp.offset + j];
                num += diff[j] * diff[j];
                const double step = xb[grp.offset + j] - x[grp.offset + j];
                den += step * step;
            }
            num = std::sqrt(num);
            const double ratio = num / std::sqrt(den);
            const bool stalled = p > 0 && std::abs(ratio - best) <= 1e-13 * best;
            best = std::max(best, ratio);
            if (num == 0.0 || stalled)
                break;
            for (std::size_t j = 0; j < grp.size; ++j)
                d[j] = radius * diff[j] / num;
        }
        for (std::size_t j = 0; j < grp.size; ++j)
            xb[grp.offset + j] = x[grp.offset + j];
        out.push_back(best);
    }
    return out;
}

} // namespace scala::diag
