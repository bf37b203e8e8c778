#include "scala/autodiff/graph.hpp"

#include <algorithm>

#include "backprop.hpp"
#include "scala/errors.hpp"

namespace scala::ad {

const char* op_name(Op op) noexcept {
    switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::AddBias: return "add_bias";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Embedding: return "embedding";
    case Op::SegmentMean: return "segment_mean";
    case Op::SliceRows: return "slice_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::Softmax: return "softmax";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Clamp: return "clamp";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

const Tensor& Var::value() const {
    if (graph_ == nullptr)
        throw std::logic_error("Var is not attached to a graph");
    return graph_->node(id_).value;
}

bool Var::requires_grad() const {
    return graph_ != nullptr && graph_->node(id_).requires_grad;
}

const Tensor& Gradients::wrt(NodeId id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id)
        throw std::out_of_range("no gradient recorded for node " + std::to_string(id));
    return grads_[static_cast<std::size_t>(it - ids_.begin())];
}

bool Gradients::contains(NodeId id) const noexcept {
    return std::binary_search(ids_.begin(), ids_.end(), id);
}

Var Graph::constant(Tensor value) {
    detail::Node n;
    n.value = std::move(value);
    return record(std::move(n));
}

Var Graph::variable(Tensor value) {
    detail::Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return record(std::move(n));
}

Var Graph::record(detail::Node node) {
    if (consumed_)
        throw std::logic_error("graph already consumed by backward");
    if (!node.value.all_finite())
        throw NumericalError(std::string("non-finite output from ") + op_name(node.op));
    if (node.op != Op::Leaf)
        node.requires_grad = std::any_of(node.parents.begin(), node.parents.end(),
                                         [this](NodeId p) { return nodes_[p].requires_grad; });
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(Var loss, double seed) {
    if (&loss.graph() != this)
        throw std::invalid_argument("loss belongs to a different graph");
    if (consumed_)
        throw std::logic_error("backward called twice on the same graph");
    if (loss.value().size() != 1)
        throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    consumed_ = true;

    std::vector<Tensor> grads(nodes_.size());
    grads[loss.id()] = Tensor(loss.shape(), seed);
    for (NodeId id = loss.id() + 1; id-- > 0;) {
        const detail::Node& n = nodes_[id];
        if (!n.requires_grad || n.op == Op::Leaf || grads[id].empty())
            continue;
        detail::backprop(n, grads[id], nodes_, grads);
        if (!grads[id].all_finite())
            throw NumericalError(std::string("non-finite gradient through ") + op_name(n.op));
    }

    Gradients out;
    for (NodeId id = 0; id < nodes_.size(); ++id) {
        const detail::Node& n = nodes_[id];
        if (n.op != Op::Leaf || !n.requires_grad)
            continue;
        out.ids_.push_back(id);
        out.grads_.push_back(grads[id].empty() ? Tensor(n.value.shape()) : std::move(grads[id]));
    }
    return out;
}

} // namespace scala::ad
