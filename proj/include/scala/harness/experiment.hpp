#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scala/harness/accumulate.hpp"
#include "scala/harness/config.hpp"
#include "scala/harness/dataset.hpp"
#include "scala/harness/metrics.hpp"
#include "scala/model/model.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::harness {

struct RunSummary {
    std::string mode;
    std::uint64_t seed = 0;
    std::size_t total_steps = 0;
    std::size_t steps_completed = 0;
    std::size_t steps_per_epoch = 0;
    double final_task_loss = 0.0;
    std::optional<double> final_train_acc;
    std::optional<double> final_test_acc;
    std::optional<double> best_test_acc;
    // Top Hessian eigenvalue of the final model, averaged over the
    // configured number of training batches.
    std::optional<double> final_sharpness;
    std::optional<double> final_sharpness_std;
    std::vector<double> final_sharpness_samples;
    std::uint64_t forward_passes = 0;
    std::uint64_t backward_passes = 0;
    // Raw network evaluations, including the perturbed branch of each main graph.
    std::uint64_t network_forward_evals = 0;
    double adv_max_deviation = 0.0;
    bool aborted = false;
    std::optional<std::size_t> abort_step;
    std::string abort_reason;
};

nlohmann::json to_json(const RunSummary& s);

// Everything the loop knows about one outer step, handed to observers.
struct StepEvent {
    std::size_t step = 0;
    std::size_t epoch = 0;
    const Accumulated* accumulated = nullptr;
    const opt::StepReport* report = nullptr;
    const RunRecord* record = nullptr;
    // Parameters the gradient was taken at, and the model after the update.
    std::span<const double> params_before;
    const model::Model* model = nullptr;
};

struct RunOptions {
    std::function<void(const StepEvent&)> observer;
    // Write CSV, JSONL, summary and checkpoints under cfg.output.dir.
    bool write_files = true;
    // Keep per-micro-batch gradients in StepEvent::accumulated.
    bool keep_micro_grads = false;
    // Reuse a dataset instead of synthesizing one from the config.
    const Dataset* dataset = nullptr;
};

struct RunResult {
    RunSummary summary;
    std::vector<RunRecord> records;
    model::Model final_model;
    std::vector<std::string> group_names;
};

std::size_t steps_per_epoch(const ExperimentConfig& cfg, std::size_t train_size);

// Training order for one epoch: a permutation of [0, n) fixed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

// Splits `batch` into consecutive micro-batches of `micro` rows.
std::vector<model::Batch> split_micro_batches(const model::Batch& batch, std::size_t micro);

// Whether the adversary is in the loss during `epoch`.
bool adversary_active(const ExperimentConfig& resolved, std::size_t epoch);

// Model at step 0 of a run with this config.
model::Model initial_model(const ExperimentConfig& cfg);

// Runs the resolved mode of `cfg` end to end. Numerical failures stop the
// run and are reported in the summary instead of thrown.
RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

// Mean and population std of the top eigenvalue over `batches` disjoint
// training batches of `samples` rows.
std::vector<double> final_sharpness(const model::Model& model, const model::Batch& train, std::size_t batches,
                                    std::size_t samples, std::size_t iters, double tol, std::uint64_t seed);

} // namespace scala::harness
