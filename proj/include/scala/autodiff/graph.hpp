#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scala/autodiff/tensor.hpp"

namespace scala::ad {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
    Leaf,
    MatMul,
    Transpose,
    Add,
    AddBias,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Embedding,
    SegmentMean,
    SliceRows,
    ConcatRows,
    Softmax,
    Log,
    Sum,
    Mean,
    Square,
    Clamp,
    SoftmaxCrossEntropy,
};

const char* op_name(Op op) noexcept;

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;

    NodeId id() const noexcept { return id_; }
    Graph& graph() const noexcept { return *graph_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    friend class Graph;
    Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    NodeId id_ = 0;
};

// Gradients of a scalar with respect to every variable leaf, keyed by node id.
class Gradients {
public:
    const Tensor& wrt(Var v) const { return wrt(v.id()); }
    const Tensor& wrt(NodeId id) const;
    bool contains(NodeId id) const noexcept;

private:
    friend class Graph;
    std::vector<NodeId> ids_;
    std::vector<Tensor> grads_;
};

namespace detail {

struct Node {
    Op op = Op::Leaf;
    std::vector<NodeId> parents;
    Tensor value;
    bool requires_grad = false;
    // Op-specific saved state: row indices, integer size, and scalar bounds.
    std::vector<std::size_t> indices;
    std::size_t count = 0;
    double a = 0.0;
    double b = 0.0;
    Tensor saved;
};

} // namespace detail

// Append-only tape of tensor operations. Nodes are stored in creation
// order, which is a topological order; backward walks it in reverse.
// A graph supports exactly one backward pass.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);

    Gradients backward(Var loss, double seed = 1.0);

    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    const detail::Node& node(NodeId id) const { return nodes_.at(id); }

    // Used by the op kernels.
    Var record(detail::Node node);

private:
    std::vector<detail::Node> nodes_;
    bool consumed_ = false;
};

} // namespace scala::ad
