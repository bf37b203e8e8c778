#include <algorithm>
#include <cmath>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"

namespace scala::diag {

double TheoryConstants::alpha_inf() const {
    if (alpha.empty())
        throw std::invalid_argument("theory constants: alpha is empty");
    return *std::max_element(alpha.begin(), alpha.end());
}

double TheoryConstants::kappa() const {
    const double lo = *std::min_element(alpha.begin(), alpha.end());
    if (!(lo > 0.0))
        throw std::invalid_argument("theory constants: alpha must be positive");
    return alpha_inf() / lo;
}

std::vector<double> TheoryConstants::mu() const {
    std::vector<double> out;
    for (double a : alpha)
        out.push_back(1.0 / (2.0 * a));
    return out;
}

void TheoryConstants::validate() const {
    if (alpha.empty())
        throw ConfigError("theory.alpha", "needs one entry per group");
    for (double a : alpha)
        if (!(a > 0.0))
            throw ConfigError("theory.alpha", "entries must be positive");
    for (double s : sigma)
        if (!(s >= 0.0))
            throw ConfigError("theory.sigma", "entries must be non-negative");
    if (!(D > 0.0))
        throw ConfigError("theory.D", "must be positive");
    if (!(G > 0.0))
        throw ConfigError("theory.G", "must be positive");
    if (!(Z >= 0.0))
        throw ConfigError("theory.Z", "must be non-negative");
    if (!(eps_inner > 0.0))
        throw ConfigError("theory.eps-inner", "must be positive");
    if (!(C > 0.0) || !(S > 0.0))
        throw ConfigError("theory.C", "C and S must be positive");
    if (!(clip_hi > 0.0) || clip_lo < 0.0 || !(clip_lo < clip_hi))
        throw ConfigError("theory.clip-hi", "needs 0 <= clip-lo < clip-hi");
}

RatePlan rate_calculator(const TheoryConstants& c, std::size_t T) {
    if (T < 1)
        throw std::invalid_argument("rate_calculator: T must be at least 1");
    c.validate();
    const double t = static_cast<double>(T);
    const double root_t = std::sqrt(t);
    RatePlan plan;
    plan.eta = 1.0 / (c.clip_hi * root_t);
    plan.batch_size = 16.0 * t * c.clip_lo * c.clip_lo * c.Z * c.Z / (c.clip_hi * c.clip_hi);
    plan.bound = 4.0 * c.eps_inner * c.alpha_inf() + 2.0 * c.kappa() * c.D * c.G / root_t;
    if (c.S / c.C >= 2.0) {
        plan.inner_iters_note = "undefined (S/C >= 2)";
    } else {
        const double factor = c.C / (2.0 * c.C - c.S);
        const double count = std::ceil(factor * std::log(8.0 * c.alpha_inf() / c.eps_inner));
        plan.inner_iters = static_cast<std::size_t>(std::max(1.0, count));
    }
    return plan;
}

TheoryEstimator::TheoryEstimator(std::vector<GroupRange> groups)
    : groups_(std::move(groups)), sigma_(groups_.size(), 0.0) {}

void TheoryEstimator::observe_gradient(std::span<const double> grad) {
    for (double g : grad)
        g_inf_ = std::max(g_inf_, std::abs(g));
}

void TheoryEstimator::observe_spread(std::span<const std::vector<double>> micro_grads, std::span<const double> mean) {
    if (micro_grads.empty())
        return;
    for (std::size_t k = 0; k < groups_.size(); ++k) {
        double total = 0.0;
        for (const std::vector<double>& g : micro_grads)
            for (std::size_t j = groups_[k].offset; j < groups_[k].offset + groups_[k].size; ++j)
                total += (g[j] - mean[j]) * (g[j] - mean[j]);
        sigma_[k] = std::max(sigma_[k], std::sqrt(total / static_cast<double>(micro_grads.size())));
    }
}

void TheoryEstimator::observe_moreau(const MoreauProbeResult& probe, std::span<const double> x,
                                     std::span<const double> grad) {
    for (std::size_t j = 0; j < x.size(); ++j)
        if (std::abs(grad[j]) > 1e-12)
            ratio_max_ = std::max(ratio_max_, std::abs(probe.prox_point[j] - x[j]) / std::abs(grad[j]));
}

void TheoryEstimator::observe_loss(double loss) {
    min_loss_ = min_loss_ ? std::min(*min_loss_, loss) : loss;
}

void TheoryEstimator::set_initial_gap(double envelope_at_start) {
    initial_ = envelope_at_start;
}

TheoryConstants TheoryEstimator::estimate(std::vector<double> alpha, double eps_inner, double C, double S,
                                          double clip_lo, double clip_hi) const {
    TheoryConstants c;
    c.alpha = std::move(alpha);
    c.eps_inner = eps_inner;
    c.C = C;
    c.S = S;
    c.clip_lo = clip_lo;
    c.clip_hi = clip_hi;
    c.G = std::max(g_inf_, 1e-12);
    c.sigma = sigma_;
    const double sigma_max = sigma_.empty() ? 0.0 : *std::max_element(sigma_.begin(), sigma_.end());
    c.Z = ratio_max_ * sigma_max;
    c.D = (initial_ && min_loss_) ? std::max(*initial_ - *min_loss_, 1e-12) : 1.0;
    return c;
}

std::vector<std::pair<std::string, std::string>> TheoryEstimator::recipes() const {
    return {
        {"D", "Moreau envelope at the initial point minus the smallest observed training loss"},
        {"G", "largest |component| of any averaged step gradient"},
        {"sigma", "per group, largest root-mean-square deviation of micro-batch gradients from their step mean"},
        {"Z", "largest |prox - x| / |gradient| over probed coordinates, times the largest sigma"},
    };
}

} // namespace scala::diag
