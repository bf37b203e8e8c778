#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scala/adversary/adversary.hpp"
#include "scala/model/model.hpp"

namespace scala::opt {

enum class OptimizerKind { ScalaGroupwise, PlainNormalized, Adam };

const char* to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer_kind(const std::string& s);

struct OuterOptConfig {
    OptimizerKind kind = OptimizerKind::ScalaGroupwise;
    double lr = 1e-3;
    double warmup_ratio = 0.1;
    double clip_lo = 0.0;
    double clip_hi = 10.0;
    std::size_t epochs = 6;
    // Constant rate 1/(clip_hi * sqrt(T)) with no warmup.
    bool theory_mode = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

double clip(double c, double lo, double hi);

// Learning rate for `step` in [0, total_steps).
double lr_at(const OuterOptConfig& cfg, std::size_t step, std::size_t total_steps);
double theory_lr(double clip_hi, std::size_t total_steps);
double sqrt_scale_lr(double lr, double batch_base, double batch_new);

struct GroupUpdate {
    std::size_t group = 0;
    double param_norm = 0.0;
    double grad_norm = 0.0;
    double nu = 0.0;
    double update_norm = 0.0;
    bool skipped = false;
};

struct StepReport {
    double lr = 0.0;
    std::vector<GroupUpdate> groups;
    double grad_norm = 0.0;
    double task_loss = 0.0;
    // lambda * r, averaged over micro-batches.
    double reg_loss = 0.0;
    bool adversary_active = false;

    double update_norm() const;
};

struct LossValue {
    ad::Var var;
    double value = 0.0;
    double task = 0.0;
    // Unscaled regularizer; zero when no adversary term was added.
    double regularizer = 0.0;
};

// Task loss plus lambda * r at the adversarial embeddings. The perturbed
// branch is emb + const(y_final - emb), so the embedding parameters also
// receive the regularizer's gradient. With no outcome (or lambda = 0) the
// graph is exactly the task loss.
LossValue composed_loss(const model::Model& model, const model::BoundParams& params,
                        const model::ForwardResult& clean, const model::Batch& batch,
                        adv::AdvOutcome* outcome, const ad::Tensor& gamma, adv::RegularizerKind kind,
                        double lambda);
LossValue task_only_loss(const model::Model& model, const model::ForwardResult& clean, const model::Batch& batch);

// Group-wise step: x_i -= lr * clip(|x_i|) * g_i / |g_i|, using the norm
// before the update. Groups with zero gradient are left alone.
StepReport scala_step(model::Model& model, std::span<const double> grad, double lr, double clip_lo, double clip_hi);
// Same rule over the whole parameter vector as one block.
StepReport plain_normalized_step(model::Model& model, std::span<const double> grad, double lr, double clip_lo,
                                 double clip_hi);

class AdamState {
public:
    AdamState() = default;
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
    std::size_t steps() const noexcept { return t_; }

private:
    friend StepReport adam_step(model::Model&, std::span<const double>, double, const OuterOptConfig&, AdamState&);
    std::vector<double> m_;
    std::vector<double> v_;
    std::size_t t_ = 0;
};

StepReport adam_step(model::Model& model, std::span<const double> grad, double lr, const OuterOptConfig& cfg,
                     AdamState& state);

// Dispatches on cfg.kind and keeps the Adam moments between calls.
class OuterOptimizer {
public:
    OuterOptimizer(OuterOptConfig cfg, std::size_t parameter_count);

    StepReport step(model::Model& model, std::span<const double> grad, double lr);
    const OuterOptConfig& config() const noexcept { return cfg_; }

private:
    OuterOptConfig cfg_;
    AdamState adam_;
};

} // namespace scala::opt
