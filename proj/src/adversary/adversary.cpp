#include "scala/adversary/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "scala/autodiff/ops.hpp"
#include "scala/errors.hpp"

namespace scala::adv {

const char* to_string(RegularizerKind kind) noexcept {
    return kind == RegularizerKind::KlSym ? "kl-sym" : "squared";
}

const char* to_string(LabelSource source) noexcept {
    return source == LabelSource::LabelProbability ? "label-probability" : "ground-truth";
}

RegularizerKind parse_regularizer(const std::string& s) {
    if (s == "kl-sym")
        return RegularizerKind::KlSym;
    if (s == "squared")
        return RegularizerKind::Squared;
    throw std::invalid_argument("unknown regularizer '" + s + "'");
}

LabelSource parse_label_source(const std::string& s) {
    if (s == "label-probability")
        return LabelSource::LabelProbability;
    if (s == "ground-truth")
        return LabelSource::GroundTruth;
    throw std::invalid_argument("unknown label source '" + s + "'");
}

void AdvNoiseConfig::validate() const {
    if (!(rho > 0.0))
        throw ConfigError("adversary.rho", "must be positive");
    if (!(omega > 0.0))
        throw ConfigError("adversary.omega", "must be positive");
    if (steps < 1)
        throw ConfigError("adversary.steps", "must be at least 1");
    if (!(lambda >= 0.0))
        throw ConfigError("adversary.lambda", "must be non-negative");
    if (init_noise_std && !(*init_noise_std >= 0.0))
        throw ConfigError("adversary.init-noise-std", "must be non-negative");
}

ad::Tensor make_label(const ad::Tensor& logits, const model::Batch& batch, LabelSource source, model::TaskKind task) {
    const std::size_t rows = logits.rows(), cols = logits.cols();
    if (task == model::TaskKind::Regression) {
        if (source == LabelSource::LabelProbability)
            return logits;
        if (batch.targets.size() != rows)
            throw ShapeError("make_label: targets do not match batch");
        return ad::Tensor::matrix(rows, 1, batch.targets);
    }
    if (source == LabelSource::GroundTruth) {
        if (batch.labels.size() != rows)
            throw ShapeError("make_label: labels do not match batch");
        ad::Tensor onehot(logits.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            if (batch.labels[r] >= cols)
                throw std::out_of_range("make_label: label outside class range");
            onehot.at(r, batch.labels[r]) = 1.0;
        }
        return onehot;
    }
    ad::Graph g;
    return ad::softmax(g.constant(logits)).value();
}

ad::Tensor make_label(const model::Model& model, const model::Batch& batch, LabelSource source) {
    return make_label(model.predict(batch), batch, source, model.arch().task);
}

ad::Var regularizer(ad::Var gamma, ad::Var logits_at_y, RegularizerKind kind) {
    ad::Graph& g = logits_at_y.graph();
    const double rows = static_cast<double>(logits_at_y.value().rows());
    if (kind == RegularizerKind::Squared)
        return ad::mean(ad::square(ad::sub(gamma, logits_at_y)));

    // KL(g||p) + KL(p||g) = sum (g - p)(log g - log p)
    if (gamma.requires_grad())
        throw std::invalid_argument("regularizer: gamma must be detached");
    ad::Var p = ad::softmax(logits_at_y);
    ad::Var log_p = ad::log(ad::clamp(p, kProbabilityFloor, 1.0));
    ad::Tensor log_gamma = gamma.value();
    for (double& v : log_gamma.data())
        v = std::log(std::clamp(v, kProbabilityFloor, 1.0));
    ad::Var diff = ad::sub(gamma, p);
    ad::Var log_ratio = ad::sub(g.constant(std::move(log_gamma)), log_p);
    return ad::scale(ad::sum(ad::mul(diff, log_ratio)), 1.0 / rows);
}

double regularizer_value(const ad::Tensor& gamma, const ad::Tensor& logits_at_y, RegularizerKind kind) {
    ad::Graph g;
    return regularizer(g.constant(gamma), g.constant(logits_at_y), kind).value().item();
}

void project_in_place(std::span<double> y, std::span<const double> center, double omega) {
    if (y.size() != center.size())
        throw ShapeError("project: shape mismatch");
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = std::clamp(y[i], center[i] - omega, center[i] + omega);
}

ad::Tensor project(const ad::Tensor& y, const ad::Tensor& center, double omega) {
    if (y.shape() != center.shape())
        throw ShapeError("project: shape mismatch " + ad::shape_string(y.shape()) + " vs " +
                         ad::shape_string(center.shape()));
    ad::Tensor out = y;
    project_in_place(out.data(), center.data(), omega);
    return out;
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

ad::Tensor initial_point(const ad::Tensor& center, double std, double omega, std::mt19937_64& rng) {
    ad::Tensor y = center;
    if (std > 0.0) {
        std::normal_distribution<double> noise(0.0, std);
        for (double& v : y.data())
            v += noise(rng);
    }
    project_in_place(y.data(), center.data(), omega);
    return y;
}

AdvOutcome projected_ascent(const AscentObjective& r, const ad::Tensor& center, ad::Tensor start,
                            const AdvNoiseConfig& cfg) {
    if (start.shape() != center.shape())
        throw ShapeError("projected_ascent: start and center shapes differ");
    AdvOutcome out;
    out.y_final = std::move(start);
    out.max_deviation = linf_distance(out.y_final.data(), center.data());
    ad::Tensor grad(center.shape());
    for (std::size_t tau = 0; tau < cfg.steps; ++tau) {
        std::fill(grad.data().begin(), grad.data().end(), 0.0);
        const double value = r(out.y_final, grad);
        out.cost.forward += 1;
        out.cost.backward += 1;
        if (!std::isfinite(value) || !grad.all_finite())
            throw NumericalError("projected ascent: non-finite regularizer at inner step " + std::to_string(tau));
        out.ascent_trace.push_back(value);

        auto y = out.y_final.data();
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += cfg.rho * grad[i];
        project_in_place(y, center.data(), cfg.omega);
        out.max_deviation = std::max(out.max_deviation, linf_distance(y, center.data()));
    }
    return out;
}

AdvOutcome pga(const model::Model& model, const ad::Tensor& clean_embeddings, const ad::Tensor& gamma,
               const AdvNoiseConfig& cfg, std::mt19937_64& rng) {
    auto objective = [&](const ad::Tensor& y, ad::Tensor& grad) {
        ad::Graph g;
        const model::BoundParams params = model.bind(g, false);
        ad::Var yv = g.variable(y);
        ad::Var r = regularizer(g.constant(gamma), model.forward_from_embeddings(params, yv), cfg.regularizer);
        const double value = r.value().item();
        grad = g.backward(r).wrt(yv);
        return value;
    };
    ad::Tensor start = initial_point(clean_embeddings, cfg.initial_std(), cfg.omega, rng);
    return projected_ascent(objective, clean_embeddings, std::move(start), cfg);
}

AdvOutcome pga(const model::Model& model, const model::Batch& batch, const AdvNoiseConfig& cfg,
               std::mt19937_64& rng) {
    ad::Graph g;
    const model::BoundParams params = model.bind(g, false);
    const model::ForwardResult clean = model.forward(g, params, batch);
    const ad::Tensor gamma = make_label(clean.logits.value(), batch, cfg.label_source, model.arch().task);
    AdvOutcome out = pga(model, clean.embeddings.value(), gamma, cfg, rng);
    out.cost.forward += 1;
    return out;
}

AdvOutcome gaussian_noise(const ad::Tensor& clean_embeddings, const AdvNoiseConfig& cfg, std::mt19937_64& rng) {
    AdvOutcome out;
    out.y_final = initial_point(clean_embeddings, cfg.omega, cfg.omega, rng);
    out.max_deviation = linf_distance(out.y_final.data(), clean_embeddings.data());
    return out;
}

} // namespace scala::adv
