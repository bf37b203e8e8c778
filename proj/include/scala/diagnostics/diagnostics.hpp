#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scala/autodiff/hvp.hpp"
#include "scala/model/model.hpp"

namespace scala::diag {

// Contiguous slice of the flat parameter vector.
struct GroupRange {
    std::size_t offset = 0;
    std::size_t size = 0;
};

std::vector<GroupRange> group_ranges(const model::Model& model);
std::vector<GroupRange> single_group(std::size_t n);

// Task loss of `batch` as a function of the flat parameters of `model`'s
// architecture. Captures copies, so the result outlives its arguments.
ad::Objective task_objective(const model::Model& model, const model::Batch& batch);

// ---- sharpness ----------------------------------------------------------

struct SharpnessOptions {
    std::size_t max_iters = 100;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::size_t max_restarts = 3;
    // Second pass on H - theta I to find the far end of the spectrum, so a
    // slightly larger eigenvalue of opposite sign is not missed.
    bool check_opposite_end = true;
    // Report the largest algebraic eigenvalue when the dominant one is negative.
    bool shift_negative = false;
    std::optional<double> hvp_eps;
};

struct SharpnessResult {
    // Largest-magnitude eigenvalue, signed.
    double eigenvalue = 0.0;
    // Quotients v'Hv of the first pass.
    std::vector<double> rayleigh_trace;
    // Across all passes.
    std::size_t iterations = 0;
    bool converged = false;
    bool negative = false;
    std::size_t restarts = 0;
    // Largest algebraic eigenvalue, present when the shift ran.
    std::optional<double> largest_algebraic;

    double top() const noexcept { return largest_algebraic.value_or(eigenvalue); }
};

// Power iteration v <- Hv/|Hv| with finite-difference Hessian-vector
// products. The estimate is the dominant Ritz value on the last two
// iterates, which separates a +lambda/-lambda pair of nearly equal magnitude
// that the plain quotient v'Hv resolves only slowly. Stops when successive
// estimates agree to tol * max(1, |estimate|) or the eigen-residual
// |Hv - qv| falls below tol * |q|.
SharpnessResult sharpness(const ad::Objective& f, std::span<const double> x, const SharpnessOptions& opts = {});
SharpnessResult sharpness(const model::Model& model, const model::Batch& batch, const SharpnessOptions& opts = {});

// ---- smoothness and weak convexity -------------------------------------

struct AlphaProbeOptions {
    std::size_t n_probes = 30;
    // Displacement length; 1e-3 * (1 + |x|_inf) when unset.
    std::optional<double> radius;
    std::uint64_t seed = 0;
};

// Per-group lower bound on the gradient Lipschitz constant. Each probe
// displaces only group i; successive displacements follow the observed
// gradient change, so on quadratics the estimate converges to the top
// curvature of the group's diagonal Hessian block.
std::vector<double> probe_alpha(const ad::Objective& f, std::span<const double> x,
                                std::span<const GroupRange> groups, const AlphaProbeOptions& opts = {});

struct WeakConvexityResult {
    bool pass = true;
    double worst_violation = 0.0;
    std::size_t segments = 0;
};

// Sampled midpoint-convexity test of g(x) + sum_i alpha_i/2 |x_i|^2 on random
// segments around x. Falsification only: passing proves nothing.
WeakConvexityResult weak_convexity_check(const ad::Objective& g, std::span<const double> x,
                                         std::span<const GroupRange> groups, std::span<const double> alpha,
                                         std::size_t n_segments, double radius = 1.0, std::uint64_t seed = 0,
                                         double tol = 1e-9);

// ---- Moreau envelope ----------------------------------------------------

struct MoreauOptions {
    std::size_t max_iters = 500;
    double tol = 1e-10;
    std::optional<double> inner_lr;
    // Smoothness of g used for the default step 1/(2(max alpha + L)).
    // Probed over the whole vector when unset.
    std::optional<double> smoothness;
};

struct MoreauProbeResult {
    std::vector<double> prox_point;
    // 2 alpha_i (x_i - prox_i), group by group.
    std::vector<double> gradient;
    double squared_norm = 0.0;
    double residual = 0.0;
    double envelope = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

MoreauProbeResult moreau_grad(const ad::Objective& g, std::span<const double> x, std::span<const GroupRange> groups,
                              std::span<const double> alpha, const MoreauOptions& opts = {});

// ---- theory --------------------------------------------------------------

struct TheoryConstants {
    std::vector<double> alpha;
    double D = 1.0;
    double G = 1.0;
    double Z = 1.0;
    std::vector<double> sigma;
    double eps_inner = 1e-2;
    double C = 1.0;
    double S = 1.0;
    double clip_lo = 0.0;
    double clip_hi = 10.0;

    double alpha_inf() const;
    double kappa() const;
    std::vector<double> mu() const;
    void validate() const;
};

struct RatePlan {
    double eta = 0.0;
    double batch_size = 0.0;
    double bound = 0.0;
    std::optional<std::size_t> inner_iters;
    std::string inner_iters_note;
};

RatePlan rate_calculator(const TheoryConstants& c, std::size_t T);

// Accumulates run measurements into working theory constants. Every
// estimate is empirical and carries a recipe string.
class TheoryEstimator {
public:
    explicit TheoryEstimator(std::vector<GroupRange> groups);

    // Largest |g_j| over all averaged gradients seen.
    void observe_gradient(std::span<const double> grad);
    // Per-group spread of micro-batch gradients around their mean.
    void observe_spread(std::span<const std::vector<double>> micro_grads, std::span<const double> mean);
    // Ratio |prox - x| / |grad| per coordinate.
    void observe_moreau(const MoreauProbeResult& probe, std::span<const double> x, std::span<const double> grad);
    void observe_loss(double loss);
    void set_initial_gap(double envelope_at_start);

    TheoryConstants estimate(std::vector<double> alpha, double eps_inner, double C, double S, double clip_lo,
                             double clip_hi) const;
    std::vector<std::pair<std::string, std::string>> recipes() const;

private:
    std::vector<GroupRange> groups_;
    double g_inf_ = 0.0;
    std::vector<double> sigma_;
    double ratio_max_ = 0.0;
    std::optional<double> initial_;
    std::optional<double> min_loss_;
};

} // namespace scala::diag
