#pragma once

#include <functional>
#include <span>
#include <vector>

namespace scala::ad {

// A scalar function of a flat parameter vector. Writes the gradient at `x`
// into `grad` (same length as `x`) and returns the function value.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

// Default finite-difference radius: 1e-4 * (1 + max|x_i|).
double default_hvp_eps(std::span<const double> x);

// Central-difference Hessian-vector product:
//   (grad f(x + eps v) - grad f(x - eps v)) / (2 eps)
std::vector<double> hvp(const Objective& f, std::span<const double> x, std::span<const double> v, double eps);
std::vector<double> hvp(const Objective& f, std::span<const double> x, std::span<const double> v);

} // namespace scala::ad
