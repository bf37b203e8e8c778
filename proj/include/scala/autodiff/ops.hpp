#pragma once

#include <cstddef>
#include <span>

#include "scala/autodiff/graph.hpp"

// Differentiable tensor operations. Every op checks operand shapes, records
// a node on the operands' graph, and rejects non-finite results.
namespace scala::ad {

// [m x k] * [k x n]
Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
// [m x n] + [n], bias broadcast over rows.
Var add_bias(Var a, Var bias);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var relu(Var a);
Var tanh(Var a);

// Gathers rows of a [V x d] table: result[r] = table[ids[r]].
Var embedding(Var table, std::span<const std::size_t> ids);
// [n*len x d] -> [n x d], mean over each run of `len` consecutive rows.
Var segment_mean(Var a, std::size_t len);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);

// Row-wise softmax over the last dimension of a rank 1 or 2 tensor.
Var softmax(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);

// Mean over rows of -log softmax(logits)[row, label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

} // namespace scala::ad
