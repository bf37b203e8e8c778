#include "scala/harness/dataset.hpp"

#include <cmath>
#include <random>

namespace scala::harness {
namespace {

model::Batch token_rule(std::size_t n, const DatasetSpec& spec, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> tok(0, spec.vocab - 1);
    model::Batch b;
    b.size = n;
    b.seq_len = spec.seq_len;
    b.tokens.reserve(n * spec.seq_len);
    std::vector<std::size_t> seq(spec.seq_len);
    for (std::size_t i = 0; i < n; ++i) {
        int label = 0;
        do {
            for (std::size_t& t : seq)
                t = tok(rng);
            label = token_rule_label(seq, spec.keywords);
        } while (label < 0);
        b.tokens.insert(b.tokens.end(), seq.begin(), seq.end());
        b.labels.push_back(static_cast<std::size_t>(label));
    }
    return b;
}

model::Batch blobs(std::size_t n, const DatasetSpec& spec, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    model::Batch b;
    b.size = n;
    b.features = ad::Tensor({n, spec.features});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = coin(rng) ? 1 : 0;
        for (std::size_t j = 0; j < spec.features; ++j)
            b.features.at(i, j) = gauss(rng);
        b.features.at(i, 0) += (label == 1 ? 0.5 : -0.5) * spec.separation;
        b.labels.push_back(label);
    }
    return b;
}

model::Batch regression(std::size_t n, const DatasetSpec& spec, const std::vector<double>& w,
                        std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    model::Batch b;
    b.size = n;
    b.features = ad::Tensor({n, spec.features});
    for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < spec.features; ++j) {
            const double x = gauss(rng);
            b.features.at(i, j) = x;
            y += w[j] * x;
        }
        b.targets.push_back(y + spec.noise * gauss(rng));
    }
    return b;
}

void flip_labels(model::Batch& b, double p, std::mt19937_64& rng) {
    if (p <= 0.0)
        return;
    std::bernoulli_distribution flip(p);
    for (std::size_t& l : b.labels)
        if (flip(rng))
            l = 1 - l;
}

} // namespace

int token_rule_label(std::span<const std::size_t> tokens, std::size_t keywords) {
    int a = 0, b = 0;
    for (std::size_t t : tokens) {
        if (t < keywords)
            ++a;
        else if (t < 2 * keywords)
            ++b;
    }
    return a == b ? -1 : (a > b ? 1 : 0);
}

Dataset synth_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Dataset d;
    switch (spec.kind) {
    case DatasetKind::TokenRule:
        d.train = token_rule(spec.train_size, spec, rng);
        d.test = token_rule(spec.test_size, spec, rng);
        break;
    case DatasetKind::GaussianBlobs:
        d.train = blobs(spec.train_size, spec, rng);
        d.test = blobs(spec.test_size, spec, rng);
        break;
    case DatasetKind::Regression: {
        std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(spec.features)));
        std::vector<double> w(spec.features);
        for (double& v : w)
            v = gauss(rng);
        d.train = regression(spec.train_size, spec, w, rng);
        d.test = regression(spec.test_size, spec, w, rng);
        break;
    }
    }
    flip_labels(d.train, spec.label_noise, rng);
    return d;
}

} // namespace scala::harness
