#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scala/errors.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::opt {

const char* to_string(OptimizerKind kind) noexcept {
    switch (kind) {
    case OptimizerKind::ScalaGroupwise:
        return "scala-groupwise";
    case OptimizerKind::PlainNormalized:
        return "plain-normalized";
    case OptimizerKind::Adam:
        return "adam";
    }
    return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
    if (s == "scala-groupwise")
        return OptimizerKind::ScalaGroupwise;
    if (s == "plain-normalized")
        return OptimizerKind::PlainNormalized;
    if (s == "adam")
        return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer kind '" + s + "'");
}

void OuterOptConfig::validate() const {
    if (!(clip_lo < clip_hi))
        throw ConfigError("optimizer.clip-lo", "must be below optimizer.clip-hi");
    if (clip_lo < 0.0)
        throw ConfigError("optimizer.clip-lo", "must be non-negative");
    if (!(lr > 0.0) && !theory_mode)
        throw ConfigError("optimizer.lr", "must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
        throw ConfigError("optimizer.warmup-ratio", "must lie in [0, 1)");
    if (epochs < 1)
        throw ConfigError("optimizer.epochs", "must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0))
        throw ConfigError("optimizer.beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("optimizer.beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0))
        throw ConfigError("optimizer.adam-eps", "must be positive");
}

double clip(double c, double lo, double hi) {
    if (!(lo < hi))
        throw std::invalid_argument("clip: lo must be below hi");
    return std::max(lo, std::min(c, hi));
}

double theory_lr(double clip_hi, std::size_t total_steps) {
    if (total_steps == 0 || !(clip_hi > 0.0))
        throw std::invalid_argument("theory_lr: needs positive clip_hi and steps");
    return 1.0 / (clip_hi * std::sqrt(static_cast<double>(total_steps)));
}

double lr_at(const OuterOptConfig& cfg, std::size_t step, std::size_t total_steps) {
    if (step >= total_steps)
        throw std::out_of_range("lr_at: step outside schedule");
    if (cfg.theory_mode)
        return theory_lr(cfg.clip_hi, total_steps);
    const auto warmup = static_cast<std::size_t>(std::floor(cfg.warmup_ratio * static_cast<double>(total_steps)));
    if (step < warmup)
        return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
    return cfg.lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

double sqrt_scale_lr(double lr, double batch_base, double batch_new) {
    if (!(batch_base > 0.0) || !(batch_new > 0.0))
        throw std::invalid_argument("sqrt_scale_lr: batch sizes must be positive");
    return lr * std::sqrt(batch_new / batch_base);
}

} // namespace scala::opt
