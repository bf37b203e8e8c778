#include "scala/harness/accumulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <random>
#include <string>
#include <thread>

#include "scala/errors.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::harness {
namespace {

void add_range(std::span<const std::vector<double>> parts, std::size_t lo, std::size_t hi, std::vector<double>& out) {
    if (hi - lo == 1) {
        out = parts[lo];
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::vector<double> right;
    add_range(parts, lo, mid, out);
    add_range(parts, mid, hi, right);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += right[i];
}

double add_range(std::span<const double> parts, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1)
        return parts[lo];
    const std::size_t mid = lo + (hi - lo) / 2;
    return add_range(parts, lo, mid) + add_range(parts, mid, hi);
}

} // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

MicroBatchResult evaluate_micro_batch(const model::Model& model, const model::Batch& batch, const AdversaryPlan& plan,
                                      std::uint64_t rng_seed) {
    MicroBatchResult res;
    ad::Graph g;
    const model::BoundParams params = model.bind(g, true);
    const model::ForwardResult clean = model.forward(g, params, batch);
    res.cost = {1, 1};
    res.network_forwards = 1;

    opt::LossValue loss;
    if (plan.active && plan.cfg.lambda > 0.0) {
        std::mt19937_64 rng(rng_seed);
        const ad::Tensor gamma =
            adv::make_label(clean.logits.value(), batch, plan.cfg.label_source, model.arch().task);
        adv::AdvOutcome outcome = plan.noise == NoiseKind::Pga
                                      ? adv::pga(model, clean.embeddings.value(), gamma, plan.cfg, rng)
                                      : adv::gaussian_noise(clean.embeddings.value(), plan.cfg, rng);
        loss = opt::composed_loss(model, params, clean, batch, &outcome, gamma, plan.cfg.regularizer,
                                  plan.cfg.lambda);
        res.cost += outcome.cost;
        res.network_forwards += outcome.cost.forward + 1;
        res.max_deviation = outcome.max_deviation;
    } else {
        loss = opt::task_only_loss(model, clean, batch);
    }
    if (!std::isfinite(loss.value))
        throw NumericalError("non-finite loss");
    res.task_loss = loss.task;
    res.regularizer = loss.regularizer;
    res.grad = model.flat_gradient(g.backward(loss.var), params);
    return res;
}

std::vector<double> tree_sum(std::span<const std::vector<double>> parts, double scale) {
    if (parts.empty())
        throw std::invalid_argument("tree_sum: nothing to reduce");
    std::vector<double> out;
    add_range(parts, 0, parts.size(), out);
    if (scale != 1.0)
        for (double& v : out)
            v *= scale;
    return out;
}

double tree_sum(std::span<const double> parts) {
    return parts.empty() ? 0.0 : add_range(parts, 0, parts.size());
}

std::size_t thread_budget(std::size_t workers) {
    std::size_t cap = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SCALA_OPT_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1)
                cap = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::min(cap, workers));
}

Accumulated accumulate_gradients(const model::Model& model, std::span<const model::Batch> micro_batches,
                                 std::size_t workers, const AdversaryPlan& plan, std::uint64_t seed,
                                 std::uint64_t step, bool keep_micro_grads) {
    const std::size_t count = micro_batches.size();
    if (workers < 1 || count == 0 || count % workers != 0)
        throw std::invalid_argument("accumulate_gradients: micro-batches must split evenly across workers");
    const std::size_t per_worker = count / workers;

    std::vector<MicroBatchResult> results(count);
    std::vector<std::exception_ptr> errors(workers);
    auto run_worker = [&](std::size_t w) {
        try {
            for (std::size_t k = 0; k < per_worker; ++k) {
                const std::size_t idx = w * per_worker + k;
                results[idx] = evaluate_micro_batch(model, micro_batches[idx], plan, micro_batch_seed(seed, step, idx));
            }
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };

    const std::size_t threads = thread_budget(workers);
    if (threads == 1) {
        for (std::size_t w = 0; w < workers; ++w)
            run_worker(w);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t w = t; w < workers; w += threads)
                    run_worker(w);
            });
    }
    for (const std::exception_ptr& e : errors)
        if (e)
            std::rethrow_exception(e);

    Accumulated acc;
    std::vector<std::vector<double>> grads;
    std::vector<double> task, reg;
    grads.reserve(count);
    for (MicroBatchResult& r : results) {
        grads.push_back(std::move(r.grad));
        task.push_back(r.task_loss);
        reg.push_back(r.regularizer);
        acc.cost += r.cost;
        acc.network_forwards += r.network_forwards;
        acc.max_deviation = std::max(acc.max_deviation, r.max_deviation);
    }
    const double inv = 1.0 / static_cast<double>(count);
    acc.grad = tree_sum(grads, inv);
    for (double v : acc.grad)
        if (!std::isfinite(v))
            throw NumericalError("non-finite averaged gradient");
    acc.task_loss = tree_sum(task) * inv;
    acc.regularizer = tree_sum(reg) * inv;

    for (std::size_t w = 0; w < workers; ++w) {
        WorkerReport rep;
        rep.worker = w;
        rep.micro_batches = per_worker;
        for (std::size_t k = 0; k < per_worker; ++k) {
            const MicroBatchResult& r = results[w * per_worker + k];
            rep.task_loss += r.task_loss / static_cast<double>(per_worker);
            rep.cost += r.cost;
        }
        acc.workers.push_back(rep);
    }
    if (keep_micro_grads)
        acc.micro_grads = std::move(grads);
    return acc;
}

} // namespace scala::harness
