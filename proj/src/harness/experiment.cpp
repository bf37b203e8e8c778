#include "scala/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"
#include "scala/model/checkpoint.hpp"

namespace scala::harness {
namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ull;
constexpr std::uint64_t kShuffleStream = 0x73687566ull;
constexpr std::uint64_t kSharpnessStream = 0x73687270ull;
constexpr std::uint64_t kProbeStream = 0x70726f62ull;

nlohmann::json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

model::Batch head(const model::Batch& b, std::size_t n) {
    return b.slice(0, std::min(n, b.size));
}

double sharpness_at(const model::Model& m, const model::Batch& batch, std::size_t iters, double tol,
                    std::uint64_t seed) {
    diag::SharpnessOptions o;
    o.max_iters = iters;
    o.tol = tol;
    o.seed = seed;
    try {
        return diag::sharpness(m, batch, o).top();
    } catch (const NumericalError&) {
        // Hv vanished for every start: the loss is saturated and the Hessian is zero.
        return 0.0;
    }
}

double moreau_at(const model::Model& m, const model::Batch& batch, const DiagnosticsConfig& d, std::uint64_t seed) {
    const ad::Objective f = diag::task_objective(m, batch);
    const std::vector<diag::GroupRange> groups = diag::group_ranges(m);
    std::vector<double> alpha;
    if (d.moreau_alpha) {
        alpha.assign(groups.size(), *d.moreau_alpha);
    } else {
        diag::AlphaProbeOptions po;
        po.seed = seed;
        alpha = diag::probe_alpha(f, m.parameters(), groups, po);
    }
    diag::MoreauOptions mo;
    mo.max_iters = d.moreau_iters;
    return diag::moreau_grad(f, m.parameters(), groups, alpha, mo).squared_norm;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace

nlohmann::json to_json(const RunSummary& s) {
    nlohmann::json samples = nlohmann::json::array();
    for (double v : s.final_sharpness_samples)
        samples.push_back(v);
    return {
        {"mode", s.mode},
        {"seed", s.seed},
        {"total_steps", s.total_steps},
        {"steps_completed", s.steps_completed},
        {"steps_per_epoch", s.steps_per_epoch},
        {"final_task_loss", s.final_task_loss},
        {"final_train_acc", opt_json(s.final_train_acc)},
        {"final_test_acc", opt_json(s.final_test_acc)},
        {"best_test_acc", opt_json(s.best_test_acc)},
        {"final_sharpness", opt_json(s.final_sharpness)},
        {"final_sharpness_std", opt_json(s.final_sharpness_std)},
        {"final_sharpness_samples", samples},
        {"forward_passes", s.forward_passes},
        {"backward_passes", s.backward_passes},
        {"network_forward_evals", s.network_forward_evals},
        {"adv_max_deviation", s.adv_max_deviation},
        {"aborted", s.aborted},
        {"abort_step", s.abort_step ? nlohmann::json(*s.abort_step) : nlohmann::json(nullptr)},
        {"abort_reason", s.abort_reason},
    };
}

std::size_t steps_per_epoch(const ExperimentConfig& cfg, std::size_t train_size) {
    const std::size_t n = train_size / cfg.batch.total;
    if (n == 0)
        throw ConfigError("batch.total", "larger than the training set");
    return n;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(seed, kShuffleStream, epoch));
    // Fisher-Yates with a modulo draw.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

std::vector<model::Batch> split_micro_batches(const model::Batch& batch, std::size_t micro) {
    if (micro == 0 || batch.size % micro != 0)
        throw std::invalid_argument("split_micro_batches: batch does not split evenly");
    std::vector<model::Batch> parts;
    parts.reserve(batch.size / micro);
    for (std::size_t i = 0; i < batch.size; i += micro)
        parts.push_back(batch.slice(i, micro));
    return parts;
}

bool adversary_active(const ExperimentConfig& resolved, std::size_t epoch) {
    return resolved.adversary.lambda > 0.0 && epoch >= resolved.adversary.t_start;
}

std::vector<double> final_sharpness(const model::Model& model, const model::Batch& train, std::size_t batches,
                                    std::size_t samples, std::size_t iters, double tol, std::uint64_t seed) {
    std::vector<double> out;
    for (std::size_t k = 0; k < batches; ++k) {
        const std::size_t begin = k * samples;
        if (begin + samples > train.size)
            break;
        out.push_back(sharpness_at(model, train.slice(begin, samples), iters, tol, mix_seed(seed, kSharpnessStream, k)));
    }
    return out;
}

model::Model initial_model(const ExperimentConfig& cfg) {
    return model::Model::init(resolve_mode(cfg).architecture(), mix_seed(cfg.seed, kInitStream, 0));
}

RunResult run_experiment(const ExperimentConfig& input, const RunOptions& options) {
    input.validate();
    const ExperimentConfig cfg = resolve_mode(input);
    const DiagnosticsConfig& diag_cfg = cfg.diagnostics;

    Dataset owned;
    if (!options.dataset)
        owned = synth_dataset(cfg.dataset, cfg.dataset_seed());
    const Dataset& data = options.dataset ? *options.dataset : owned;

    RunResult result;
    result.final_model = initial_model(cfg);
    model::Model& model = result.final_model;
    for (const model::ParamGroup& g : model.groups())
        result.group_names.push_back(g.name);

    RunSummary& summary = result.summary;
    summary.mode = to_string(cfg.mode);
    summary.seed = cfg.seed;
    summary.steps_per_epoch = steps_per_epoch(cfg, data.train.size);
    summary.total_steps = summary.steps_per_epoch * cfg.optimizer.epochs;

    const bool files = options.write_files && !cfg.output.dir.empty();
    const std::filesystem::path dir = cfg.output.dir;
    std::optional<MetricWriter> writer;
    if (files)
        writer.emplace(dir, result.group_names, cfg.output.csv, cfg.output.jsonl);

    opt::OuterOptimizer optimizer(cfg.optimizer, model.parameter_count());
    const model::Batch sharp_batch = head(data.train, diag_cfg.sharpness_samples);
    const model::Batch moreau_batch = head(data.train, diag_cfg.moreau_samples);
    const auto start = std::chrono::steady_clock::now();

    AdversaryPlan plan;
    plan.cfg = cfg.adversary;
    plan.noise = cfg.mode == Mode::GaussianNoise ? NoiseKind::Gaussian : NoiseKind::Pga;

    std::uint64_t forwards = 0, backwards = 0;
    std::size_t step = 0;
    try {
        for (std::size_t epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
            plan.active = adversary_active(cfg, epoch);
            const std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, data.train.size);
            for (std::size_t k = 0; k < summary.steps_per_epoch; ++k, ++step) {
                const std::span<const std::size_t> rows(order.data() + k * cfg.batch.total, cfg.batch.total);
                const std::vector<model::Batch> micro = split_micro_batches(data.train.select(rows), cfg.batch.micro);
                const Accumulated acc = accumulate_gradients(model, micro, cfg.batch.workers, plan, cfg.seed, step,
                                                             options.keep_micro_grads);

                std::vector<double> before;
                if (options.observer)
                    before.assign(model.parameters().begin(), model.parameters().end());
                const double lr = opt::lr_at(cfg.optimizer, step, summary.total_steps);
                opt::StepReport report = optimizer.step(model, acc.grad, lr);
                report.task_loss = acc.task_loss;
                report.reg_loss = plan.active ? cfg.adversary.lambda * acc.regularizer : 0.0;
                report.adversary_active = plan.active;

                forwards += acc.cost.forward;
                backwards += acc.cost.backward;
                summary.network_forward_evals += acc.network_forwards;
                summary.adv_max_deviation = std::max(summary.adv_max_deviation, acc.max_deviation);

                RunRecord rec;
                rec.step = step;
                rec.epoch = epoch;
                rec.mode = summary.mode;
                rec.lr = lr;
                rec.task_loss = acc.task_loss;
                rec.reg_value = acc.regularizer;
                rec.lambda = plan.active ? cfg.adversary.lambda : 0.0;
                rec.adversary_active = plan.active;
                rec.grad_norm = report.grad_norm;
                rec.update_norm = report.update_norm();
                for (const opt::GroupUpdate& u : report.groups) {
                    rec.group_update_norm.push_back(u.update_norm);
                    rec.group_nu.push_back(u.nu);
                }
                rec.forward_passes = forwards;
                rec.backward_passes = backwards;
                rec.adv_max_deviation = acc.max_deviation;

                if (diag_cfg.sharpness_every && (step + 1) % diag_cfg.sharpness_every == 0)
                    rec.sharpness = sharpness_at(model, sharp_batch, diag_cfg.sharpness_iters, diag_cfg.sharpness_tol,
                                                 mix_seed(cfg.seed, kSharpnessStream, step));
                if (diag_cfg.moreau_every && (step + 1) % diag_cfg.moreau_every == 0)
                    rec.moreau_sq_norm = moreau_at(model, moreau_batch, diag_cfg, mix_seed(cfg.seed, kProbeStream, step));

                const bool epoch_end = k + 1 == summary.steps_per_epoch;
                if (epoch_end && cfg.dataset.kind != DatasetKind::Regression) {
                    rec.train_acc = model::accuracy(model.predict(data.train), data.train.labels);
                    rec.test_acc = model::accuracy(model.predict(data.test), data.test.labels);
                    summary.final_train_acc = rec.train_acc;
                    summary.final_test_acc = rec.test_acc;
                    summary.best_test_acc = std::max(summary.best_test_acc.value_or(*rec.test_acc), *rec.test_acc);
                }
                if (cfg.output.wall_time)
                    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

                summary.final_task_loss = acc.task_loss;
                summary.steps_completed = step + 1;
                if (writer)
                    writer->write(rec);
                result.records.push_back(rec);
                if (options.observer)
                    options.observer(StepEvent{step, epoch, &acc, &report, &result.records.back(), before, &model});

                if (epoch_end && files && cfg.output.checkpoint_every &&
                    (epoch + 1) % cfg.output.checkpoint_every == 0)
                    model::save_checkpoint(model, dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".json"));
            }
        }
    } catch (const NumericalError& e) {
        summary.aborted = true;
        summary.abort_step = step;
        summary.abort_reason = e.what();
    }
    summary.forward_passes = forwards;
    summary.backward_passes = backwards;

    if (!summary.aborted && diag_cfg.final_sharpness_batches > 0) {
        try {
            summary.final_sharpness_samples =
                final_sharpness(model, data.train, diag_cfg.final_sharpness_batches, diag_cfg.sharpness_samples,
                                diag_cfg.sharpness_iters, diag_cfg.sharpness_tol, cfg.seed);
        } catch (const NumericalError& e) {
            summary.abort_reason = std::string("final sharpness: ") + e.what();
        }
        const auto& v = summary.final_sharpness_samples;
        if (!v.empty()) {
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v)
                var += (x - mean) * (x - mean);
            summary.final_sharpness = mean;
            summary.final_sharpness_std = std::sqrt(var / static_cast<double>(v.size()));
        }
    }

    if (files) {
        if (writer)
            writer->flush();
        model::save_checkpoint(model, dir / "final_model.json");
        write_json(dir / "summary.json", to_json(summary));
    }
    return result;
}

} // namespace scala::harness
