#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scala/autodiff/graph.hpp"
#include "scala/model/model.hpp"

// Adversarial regularizer on input embeddings and the projected gradient
// ascent that maximizes it inside an l-infinity ball.
namespace scala::adv {

enum class RegularizerKind { KlSym, Squared };
enum class LabelSource { LabelProbability, GroundTruth };

const char* to_string(RegularizerKind kind) noexcept;
const char* to_string(LabelSource source) noexcept;
RegularizerKind parse_regularizer(const std::string& s);
LabelSource parse_label_source(const std::string& s);

// Floor applied to probabilities before every log.
inline constexpr double kProbabilityFloor = 1e-12;

struct AdvNoiseConfig {
    double rho = 1e-4;
    double omega = 1e-5;
    std::size_t steps = 1;
    double lambda = 1.0;
    std::size_t t_start = 3;
    RegularizerKind regularizer = RegularizerKind::KlSym;
    LabelSource label_source = LabelSource::LabelProbability;
    // Std of the Gaussian start around the clean embeddings; omega when unset.
    std::optional<double> init_noise_std;

    double initial_std() const noexcept { return init_noise_std.value_or(omega); }
    void validate() const;
};

struct PassCounter {
    std::uint64_t forward = 0;
    std::uint64_t backward = 0;

    PassCounter& operator+=(const PassCounter& o) noexcept {
        forward += o.forward;
        backward += o.backward;
        return *this;
    }
    friend bool operator==(const PassCounter&, const PassCounter&) = default;
};

struct AdvOutcome {
    ad::Tensor y_final;
    // Regularizer at y_final; filled by whoever evaluates it (the composed loss).
    std::optional<double> r_value;
    // r(y_tau) at the point each ascent gradient was taken.
    std::vector<double> ascent_trace;
    // max |y - center| over every iterate, including the start.
    double max_deviation = 0.0;
    PassCounter cost;
};

// Label for the second player: detached softmax of `logits` (or the raw
// output for regression), or the batch's ground truth.
ad::Tensor make_label(const ad::Tensor& logits, const model::Batch& batch, LabelSource source,
                      model::TaskKind task = model::TaskKind::Classification);
ad::Tensor make_label(const model::Model& model, const model::Batch& batch, LabelSource source);

// kl-sym: mean over rows of KL(gamma||p) + KL(p||gamma), p = softmax(logits).
// squared: mean of (gamma - output)^2.
ad::Var regularizer(ad::Var gamma, ad::Var logits_at_y, RegularizerKind kind);
double regularizer_value(const ad::Tensor& gamma, const ad::Tensor& logits_at_y, RegularizerKind kind);

// Componentwise clamp into [center - omega, center + omega].
ad::Tensor project(const ad::Tensor& y, const ad::Tensor& center, double omega);
void project_in_place(std::span<double> y, std::span<const double> center, double omega);
double linf_distance(std::span<const double> a, std::span<const double> b);

// center + N(0, std^2) per component, projected into the ball.
ad::Tensor initial_point(const ad::Tensor& center, double std, double omega, std::mt19937_64& rng);

// r(y) with its gradient written into `grad`.
using AscentObjective = std::function<double(const ad::Tensor& y, ad::Tensor& grad)>;

// `cfg.steps` iterations of y <- Pi(y + rho * grad r(y)) from `start`.
// Costs one forward and one backward pass per iteration.
AdvOutcome projected_ascent(const AscentObjective& r, const ad::Tensor& center, ad::Tensor start,
                            const AdvNoiseConfig& cfg);

// Ascent on the model's regularizer, with parameters held fixed and
// `gamma` detached.
AdvOutcome pga(const model::Model& model, const ad::Tensor& clean_embeddings, const ad::Tensor& gamma,
               const AdvNoiseConfig& cfg, std::mt19937_64& rng);
// Convenience overload that looks up the embeddings and builds the label
// itself; the extra forward pass is counted in the outcome's cost.
AdvOutcome pga(const model::Model& model, const model::Batch& batch, const AdvNoiseConfig& cfg,
               std::mt19937_64& rng);

// Random draw inside the ball with no ascent (Gaussian-noise ablation).
AdvOutcome gaussian_noise(const ad::Tensor& clean_embeddings, const AdvNoiseConfig& cfg, std::mt19937_64& rng);

} // namespace scala::adv
