#include <cmath>

#include "scala/errors.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::opt {
namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

void check_gradient(const model::Model& model, std::span<const double> grad) {
    if (grad.size() != model.parameter_count())
        throw ShapeError("gradient length " + std::to_string(grad.size()) + " does not match " +
                         std::to_string(model.parameter_count()) + " parameters");
    for (double g : grad)
        if (!std::isfinite(g))
            throw NumericalError("non-finite gradient");
}

// Applies the normalized clipped step to one contiguous block.
GroupUpdate block_step(std::span<double> x, std::span<const double> g, double lr, double lo, double hi) {
    GroupUpdate u;
    u.param_norm = norm(x);
    u.grad_norm = norm(g);
    u.nu = clip(u.param_norm, lo, hi);
    if (u.grad_norm == 0.0) {
        u.skipped = true;
        return u;
    }
    const double factor = lr * u.nu / u.grad_norm;
    double sq = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = factor * g[j];
        sq += d * d;
        x[j] -= d;
    }
    u.update_norm = std::sqrt(sq);
    return u;
}

} // namespace

double StepReport::update_norm() const {
    double s = 0.0;
    for (const GroupUpdate& g : groups)
        s += g.update_norm * g.update_norm;
    return std::sqrt(s);
}

StepReport scala_step(model::Model& model, std::span<const double> grad, double lr, double clip_lo, double clip_hi) {
    check_gradient(model, grad);
    StepReport rep;
    rep.lr = lr;
    rep.grad_norm = norm(grad);
    for (const model::ParamGroup& g : model.groups()) {
        GroupUpdate u = block_step(model.group_values(g.id), grad.subspan(g.offset, g.size), lr, clip_lo, clip_hi);
        u.group = g.id;
        rep.groups.push_back(u);
    }
    return rep;
}

StepReport plain_normalized_step(model::Model& model, std::span<const double> grad, double lr, double clip_lo,
                                 double clip_hi) {
    check_gradient(model, grad);
    StepReport rep;
    rep.lr = lr;
    std::vector<double> before(model.parameters().begin(), model.parameters().end());
    const GroupUpdate whole = block_step(model.parameters(), grad, lr, clip_lo, clip_hi);
    rep.grad_norm = whole.grad_norm;
    const double factor = whole.skipped ? 0.0 : lr * whole.nu / whole.grad_norm;
    for (const model::ParamGroup& g : model.groups()) {
        GroupUpdate u;
        u.group = g.id;
        u.param_norm = norm(std::span<const double>(before).subspan(g.offset, g.size));
        u.grad_norm = norm(grad.subspan(g.offset, g.size));
        u.nu = whole.nu;
        u.skipped = whole.skipped;
        u.update_norm = factor * u.grad_norm;
        rep.groups.push_back(u);
    }
    return rep;
}

StepReport adam_step(model::Model& model, std::span<const double> grad, double lr, const OuterOptConfig& cfg,
                     AdamState& state) {
    check_gradient(model, grad);
    const std::size_t n = model.parameter_count();
    if (state.m_.size() != n) {
        state.m_.assign(n, 0.0);
        state.v_.assign(n, 0.0);
        state.t_ = 0;
    }
    ++state.t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));
    std::span<double> x = model.parameters();
    std::vector<double> pre_norms;
    for (const model::ParamGroup& g : model.groups())
        pre_norms.push_back(norm(model.group_values(g.id)));
    std::vector<double> delta(n);
    for (std::size_t j = 0; j < n; ++j) {
        state.m_[j] = cfg.beta1 * state.m_[j] + (1.0 - cfg.beta1) * grad[j];
        state.v_[j] = cfg.beta2 * state.v_[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        delta[j] = lr * (state.m_[j] / c1) / (std::sqrt(state.v_[j] / c2) + cfg.adam_eps);
        x[j] -= delta[j];
    }
    StepReport rep;
    rep.lr = lr;
    rep.grad_norm = norm(grad);
    for (const model::ParamGroup& g : model.groups()) {
        GroupUpdate u;
        u.group = g.id;
        u.grad_norm = norm(grad.subspan(g.offset, g.size));
        u.param_norm = pre_norms[g.id];
        u.nu = std::nan("");
        u.update_norm = norm(std::span<const double>(delta).subspan(g.offset, g.size));
        u.skipped = u.grad_norm == 0.0;
        rep.groups.push_back(u);
    }
    return rep;
}

OuterOptimizer::OuterOptimizer(OuterOptConfig cfg, std::size_t parameter_count)
    : cfg_(std::move(cfg)), adam_(parameter_count) {
    cfg_.validate();
}

StepReport OuterOptimizer::step(model::Model& model, std::span<const double> grad, double lr) {
    switch (cfg_.kind) {
    case OptimizerKind::ScalaGroupwise:
        return scala_step(model, grad, lr, cfg_.clip_lo, cfg_.clip_hi);
    case OptimizerKind::PlainNormalized:
        return plain_normalized_step(model, grad, lr, cfg_.clip_lo, cfg_.clip_hi);
    case OptimizerKind::Adam:
        return adam_step(model, grad, lr, cfg_, adam_);
    }
    throw std::logic_error("unknown optimizer kind");
}

} // namespace scala::opt
