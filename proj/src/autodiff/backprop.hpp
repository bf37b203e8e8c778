#pragma once

#include <vector>

#include "scala/autodiff/graph.hpp"

namespace scala::ad::detail {

// Adds the contribution of `node` (whose output gradient is `upstream`)
// into the gradient buffers of its parents that require gradients.
void backprop(const Node& node, const Tensor& upstream, const std::vector<Node>& nodes,
              std::vector<Tensor>& grads);

} // namespace scala::ad::detail
