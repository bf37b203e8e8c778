#pragma once

#include <cstdint>

#include "scala/harness/config.hpp"
#include "scala/model/model.hpp"

namespace scala::harness {

struct Dataset {
    model::Batch train;
    model::Batch test;
};

// token-rule: uniform tokens; label 1 iff tokens from set A = [0, k) outnumber
// those from B = [k, 2k). Ties are redrawn, so the rule is Bayes-separable
// and the classes are balanced by symmetry.
// gaussian-blobs: two unit-variance Gaussians whose means sit at
// +-separation/2 along the first axis.
// regression: x ~ N(0, I), y = w.x + noise * N(0, 1) with w ~ N(0, 1/F).
// Label noise flips training labels only.
Dataset synth_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Ground truth of the token rule for one sequence.
int token_rule_label(std::span<const std::size_t> tokens, std::size_t keywords);

} // namespace scala::harness
