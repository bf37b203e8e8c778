#include "scala/autodiff/hvp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scala/errors.hpp"

namespace scala::ad {

double default_hvp_eps(std::span<const double> x) {
    double inf_norm = 0.0;
    for (double v : x)
        inf_norm = std::max(inf_norm, std::abs(v));
    return 1e-4 * (1.0 + inf_norm);
}

std::vector<double> hvp(const Objective& f, std::span<const double> x, std::span<const double> v, double eps) {
    if (v.size() != x.size())
        throw ShapeError("hvp: direction length differs from parameter length");
    if (!(eps > 0.0))
        throw std::invalid_argument("hvp: eps must be positive");

    const std::size_t n = x.size();
    std::vector<double> probe(n), g_plus(n), g_minus(n);
    for (std::size_t i = 0; i < n; ++i)
        probe[i] = x[i] + eps * v[i];
    f(probe, g_plus);
    for (std::size_t i = 0; i < n; ++i)
        probe[i] = x[i] - eps * v[i];
    f(probe, g_minus);

    std::vector<double> out(n);
    const double inv = 1.0 / (2.0 * eps);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (g_plus[i] - g_minus[i]) * inv;
        if (!std::isfinite(out[i]))
            throw NumericalError("hvp: non-finite Hessian-vector product");
    }
    return out;
}

std::vector<double> hvp(const Objective& f, std::span<const double> x, std::span<const double> v) {
    return hvp(f, x, v, default_hvp_eps(x));
}

} // namespace scala::ad
