#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scala/adversary/adversary.hpp"
#include "scala/model/model.hpp"

namespace scala::harness {

enum class NoiseKind { Pga, Gaussian };

// What the adversary does for the micro-batches of one step.
struct AdversaryPlan {
    bool active = false;
    NoiseKind noise = NoiseKind::Pga;
    adv::AdvNoiseConfig cfg;
};

struct MicroBatchResult {
    std::vector<double> grad;
    double task_loss = 0.0;
    double regularizer = 0.0;
    adv::PassCounter cost;
    // Network evaluations, counting the perturbed branch of the main graph.
    std::uint64_t network_forwards = 0;
    double max_deviation = 0.0;
};

struct WorkerReport {
    std::size_t worker = 0;
    std::size_t micro_batches = 0;
    double task_loss = 0.0;
    adv::PassCounter cost;
};

struct Accumulated {
    // Mean of the micro-batch gradients.
    std::vector<double> grad;
    double task_loss = 0.0;
    double regularizer = 0.0;
    adv::PassCounter cost;
    std::uint64_t network_forwards = 0;
    double max_deviation = 0.0;
    std::vector<WorkerReport> workers;
    std::vector<std::vector<double>> micro_grads;
};

// Derived stream seed through std::seed_seq.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);
// Seed for micro-batch `index` (global position) of outer step `step`.
inline std::uint64_t micro_batch_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
    return mix_seed(seed, step, index);
}

MicroBatchResult evaluate_micro_batch(const model::Model& model, const model::Batch& batch, const AdversaryPlan& plan,
                                      std::uint64_t rng_seed);

// Pairwise tree sum over vectors in the given order, scaled by `scale`.
std::vector<double> tree_sum(std::span<const std::vector<double>> parts, double scale = 1.0);
double tree_sum(std::span<const double> parts);

// Worker threads to use for `workers` logical workers: SCALA_OPT_THREADS
// when set, else the hardware concurrency, never more than `workers`.
std::size_t thread_budget(std::size_t workers);

// `micro_batches` are in global order: worker 0's batches first. Each
// worker evaluates its own consecutive block; the reduction is over the
// global order, so the result does not depend on the worker count.
Accumulated accumulate_gradients(const model::Model& model, std::span<const model::Batch> micro_batches,
                                 std::size_t workers, const AdversaryPlan& plan, std::uint64_t seed,
                                 std::uint64_t step, bool keep_micro_grads = false);

} // namespace scala::harness
