#include "scala/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "backprop.hpp"
#include "scala/errors.hpp"

namespace scala::ad {
namespace {

using detail::Node;

Graph& same_graph(Var a, Var b, const char* op) {
    if (&a.graph() != &b.graph())
        throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
    return a.graph();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2)
        throw ShapeError(std::string(op) + " needs a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

Node make_node(Op op, std::vector<NodeId> parents, Tensor value) {
    Node n;
    n.op = op;
    n.parents = std::move(parents);
    n.value = std::move(value);
    return n;
}

// C = A * B for row-major matrices, with optional transposition of either side.
void gemm_acc(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
              std::size_t k, std::size_t n, bool trans_a, bool trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = trans_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0)
                continue;
            double* crow = &c[i * n];
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j)
                    crow[j] += av * b[j * k + p];
            } else {
                const double* brow = &b[p * n];
                for (std::size_t j = 0; j < n; ++j)
                    crow[j] += av * brow[j];
            }
        }
    }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &in[r * cols];
        double* y = &out[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c)
            y[c] /= z;
    }
}

Tensor& grad_slot(std::vector<Tensor>& grads, const std::vector<Node>& nodes, NodeId id) {
    if (grads[id].empty())
        grads[id] = Tensor(nodes[id].value.shape());
    return grads[id];
}

} // namespace

Var matmul(Var a, Var b) {
    Graph& g = same_graph(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    if (av.cols() != bv.rows())
        throw ShapeError("matmul: inner dimensions differ " + shape_string(av.shape()) + " * " +
                         shape_string(bv.shape()));
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out(Shape{m, n});
    gemm_acc(av.data(), bv.data(), out.data(), m, k, n, false, false);
    return g.record(make_node(Op::MatMul, {a.id(), b.id()}, std::move(out)));
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    require_rank2(av, "transpose");
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.at(j, i) = av.at(i, j);
    return a.graph().record(make_node(Op::Transpose, {a.id()}, std::move(out)));
}

Var add(Var a, Var b) {
    Graph& g = same_graph(a, b, "add");
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] += bd[i];
    return g.record(make_node(Op::Add, {a.id(), b.id()}, std::move(out)));
}

Var add_bias(Var a, Var bias) {
    Graph& g = same_graph(a, bias, "add_bias");
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    require_rank2(av, "add_bias");
    if (bv.rank() != 1 || bv.size() != av.cols())
        throw ShapeError("add_bias: bias " + shape_string(bv.shape()) + " does not match " +
                         shape_string(av.shape()));
    Tensor out = av;
    const std::size_t n = av.cols();
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c)
            out.at(r, c) += bv[c];
    return g.record(make_node(Op::AddBias, {a.id(), bias.id()}, std::move(out)));
}

Var sub(Var a, Var b) {
    Graph& g = same_graph(a, b, "sub");
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] -= bd[i];
    return g.record(make_node(Op::Sub, {a.id(), b.id()}, std::move(out)));
}

Var mul(Var a, Var b) {
    Graph& g = same_graph(a, b, "mul");
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] *= bd[i];
    return g.record(make_node(Op::Mul, {a.id(), b.id()}, std::move(out)));
}

Var scale(Var a, double factor) {
    Tensor out = a.value();
    for (double& v : out.data())
        v *= factor;
    Node n = make_node(Op::Scale, {a.id()}, std::move(out));
    n.a = factor;
    return a.graph().record(std::move(n));
}

Var relu(Var a) {
    Tensor out = a.value();
    for (double& v : out.data())
        v = v > 0.0 ? v : 0.0;
    return a.graph().record(make_node(Op::Relu, {a.id()}, std::move(out)));
}

Var tanh(Var a) {
    Tensor out = a.value();
    for (double& v : out.data())
        v = std::tanh(v);
    return a.graph().record(make_node(Op::Tanh, {a.id()}, std::move(out)));
}

Var embedding(Var table, std::span<const std::size_t> ids) {
    const Tensor& tv = table.value();
    require_rank2(tv, "embedding");
    const std::size_t vocab = tv.rows(), d = tv.cols();
    Tensor out(Shape{ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= vocab)
            throw std::out_of_range("embedding: id " + std::to_string(ids[r]) + " outside vocabulary of " +
                                    std::to_string(vocab));
        std::copy_n(&tv.data()[ids[r] * d], d, &out.data()[r * d]);
    }
    Node n = make_node(Op::Embedding, {table.id()}, std::move(out));
    n.indices.assign(ids.begin(), ids.end());
    return table.graph().record(std::move(n));
}

Var segment_mean(Var a, std::size_t len) {
    const Tensor& av = a.value();
    require_rank2(av, "segment_mean");
    if (len == 0 || av.rows() % len != 0)
        throw ShapeError("segment_mean: " + std::to_string(av.rows()) + " rows not divisible into runs of " +
                         std::to_string(len));
    const std::size_t groups = av.rows() / len, d = av.cols();
    Tensor out(Shape{groups, d});
    for (std::size_t gi = 0; gi < groups; ++gi) {
        for (std::size_t r = 0; r < len; ++r)
            for (std::size_t c = 0; c < d; ++c)
                out.at(gi, c) += av.at(gi * len + r, c);
        for (std::size_t c = 0; c < d; ++c)
            out.at(gi, c) /= static_cast<double>(len);
    }
    Node n = make_node(Op::SegmentMean, {a.id()}, std::move(out));
    n.count = len;
    return a.graph().record(std::move(n));
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
    const Tensor& av = a.value();
    require_rank2(av, "slice_rows");
    if (start + count > av.rows())
        throw ShapeError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_string(av.shape()));
    const std::size_t d = av.cols();
    std::vector<double> values(av.data().begin() + static_cast<std::ptrdiff_t>(start * d),
                               av.data().begin() + static_cast<std::ptrdiff_t>((start + count) * d));
    Node n = make_node(Op::SliceRows, {a.id()}, Tensor(Shape{count, d}, std::move(values)));
    n.count = start;
    return a.graph().record(std::move(n));
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty())
        throw ShapeError("concat_rows: no operands");
    Graph& g = parts.front().graph();
    const std::size_t d = parts.front().value().cols();
    std::vector<double> values;
    std::vector<NodeId> parents;
    std::size_t rows = 0;
    for (const Var& p : parts) {
        same_graph(parts.front(), p, "concat_rows");
        require_rank2(p.value(), "concat_rows");
        if (p.value().cols() != d)
            throw ShapeError("concat_rows: column mismatch");
        values.insert(values.end(), p.value().data().begin(), p.value().data().end());
        parents.push_back(p.id());
        rows += p.value().rows();
    }
    return g.record(make_node(Op::ConcatRows, std::move(parents), Tensor(Shape{rows, d}, std::move(values))));
}

Var softmax(Var a) {
    const Tensor& av = a.value();
    if (av.rank() == 0 || av.rank() > 2)
        throw ShapeError("softmax needs rank 1 or 2, got " + shape_string(av.shape()));
    Tensor out(av.shape());
    softmax_rows(av.data(), out.data(), av.rows(), av.cols());
    return a.graph().record(make_node(Op::Softmax, {a.id()}, std::move(out)));
}

Var log(Var a) {
    Tensor out = a.value();
    for (double& v : out.data())
        v = std::log(v);
    return a.graph().record(make_node(Op::Log, {a.id()}, std::move(out)));
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    return a.graph().record(make_node(Op::Sum, {a.id()}, Tensor::scalar(s)));
}

Var mean(Var a) {
    const std::size_t n = a.value().size();
    if (n == 0)
        throw ShapeError("mean of empty tensor");
    double s = 0.0;
    for (double v : a.value().data())
        s += v;
    return a.graph().record(make_node(Op::Mean, {a.id()}, Tensor::scalar(s / static_cast<double>(n))));
}

Var square(Var a) {
    Tensor out = a.value();
    for (double& v : out.data())
        v *= v;
    return a.graph().record(make_node(Op::Square, {a.id()}, std::move(out)));
}

Var clamp(Var a, double lo, double hi) {
    if (!(lo <= hi))
        throw std::invalid_argument("clamp: lo must not exceed hi");
    Tensor out = a.value();
    for (double& v : out.data())
        v = std::clamp(v, lo, hi);
    Node n = make_node(Op::Clamp, {a.id()}, std::move(out));
    n.a = lo;
    n.b = hi;
    return a.graph().record(std::move(n));
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const Tensor& z = logits.value();
    require_rank2(z, "softmax_cross_entropy");
    const std::size_t rows = z.rows(), cols = z.cols();
    if (labels.size() != rows)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    Tensor probs(z.shape());
    softmax_rows(z.data(), probs.data(), rows, cols);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] >= cols)
            throw std::out_of_range("softmax_cross_entropy: label outside class range");
        const double* x = &z.data()[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double lse = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            lse += std::exp(x[c] - mx);
        total += mx + std::log(lse) - x[labels[r]];
    }
    Node n = make_node(Op::SoftmaxCrossEntropy, {logits.id()}, Tensor::scalar(total / static_cast<double>(rows)));
    n.indices.assign(labels.begin(), labels.end());
    n.saved = std::move(probs);
    return logits.graph().record(std::move(n));
}

namespace detail {

void backprop(const Node& node, const Tensor& upstream, const std::vector<Node>& nodes,
              std::vector<Tensor>& grads) {
    auto wants = [&](std::size_t k) { return nodes[node.parents[k]].requires_grad; };
    auto slot = [&](std::size_t k) -> Tensor& { return grad_slot(grads, nodes, node.parents[k]); };
    const auto up = upstream.data();

    switch (node.op) {
    case Op::Leaf:
        return;
    case Op::MatMul: {
        const Tensor& a = nodes[node.parents[0]].value;
        const Tensor& b = nodes[node.parents[1]].value;
        const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
        if (wants(0))
            gemm_acc(up, b.data(), slot(0).data(), m, n, k, false, true);
        if (wants(1))
            gemm_acc(a.data(), up, slot(1).data(), k, m, n, true, false);
        return;
    }
    case Op::Transpose: {
        if (!wants(0))
            return;
        Tensor& g = slot(0);
        const std::size_t m = g.rows(), n = g.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                g.at(i, j) += upstream.at(j, i);
        return;
    }
    case Op::Add:
    case Op::Sub: {
        if (wants(0)) {
            auto g = slot(0).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += up[i];
        }
        if (wants(1)) {
            auto g = slot(1).data();
            const double sign = node.op == Op::Add ? 1.0 : -1.0;
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += sign * up[i];
        }
        return;
    }
    case Op::AddBias: {
        if (wants(0)) {
            auto g = slot(0).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += up[i];
        }
        if (wants(1)) {
            Tensor& g = slot(1);
            const std::size_t n = g.size();
            for (std::size_t r = 0; r < upstream.rows(); ++r)
                for (std::size_t c = 0; c < n; ++c)
                    g[c] += upstream.at(r, c);
        }
        return;
    }
    case Op::Mul: {
        const auto a = nodes[node.parents[0]].value.data();
        const auto b = nodes[node.parents[1]].value.data();
        if (wants(0)) {
            auto g = slot(0).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += up[i] * b[i];
        }
        if (wants(1)) {
            auto g = slot(1).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += up[i] * a[i];
        }
        return;
    }
    case Op::Scale: {
        if (!wants(0))
            return;
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += node.a * up[i];
        return;
    }
    case Op::Relu: {
        if (!wants(0))
            return;
        const auto a = nodes[node.parents[0]].value.data();
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a[i] > 0.0)
                g[i] += up[i];
        return;
    }
    case Op::Tanh: {
        if (!wants(0))
            return;
        const auto y = node.value.data();
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += up[i] * (1.0 - y[i] * y[i]);
        return;
    }
    case Op::Embedding: {
        if (!wants(0))
            return;
        Tensor& g = slot(0);
        const std::size_t d = g.cols();
        for (std::size_t r = 0; r < node.indices.size(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                g.at(node.indices[r], c) += upstream.at(r, c);
        return;
    }
    case Op::SegmentMean: {
        if (!wants(0))
            return;
        Tensor& g = slot(0);
        const std::size_t len = node.count, d = g.cols();
        const double inv = 1.0 / static_cast<double>(len);
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                g.at(r, c) += upstream.at(r / len, c) * inv;
        return;
    }
    case Op::SliceRows: {
        if (!wants(0))
            return;
        Tensor& g = slot(0);
        const std::size_t d = g.cols(), start = node.count;
        for (std::size_t r = 0; r < upstream.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c)
                g.at(start + r, c) += upstream.at(r, c);
        return;
    }
    case Op::ConcatRows: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
            const std::size_t len = nodes[node.parents[k]].value.size();
            if (wants(k)) {
                auto g = slot(k).data();
                for (std::size_t i = 0; i < len; ++i)
                    g[i] += up[offset + i];
            }
            offset += len;
        }
        return;
    }
    case Op::Softmax: {
        if (!wants(0))
            return;
        const Tensor& y = node.value;
        auto g = slot(0).data();
        const std::size_t rows = y.rows(), cols = y.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c)
                dot += up[r * cols + c] * y[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[r * cols + c] += y[r * cols + c] * (up[r * cols + c] - dot);
        }
        return;
    }
    case Op::Log: {
        if (!wants(0))
            return;
        const auto a = nodes[node.parents[0]].value.data();
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += up[i] / a[i];
        return;
    }
    case Op::Sum:
    case Op::Mean: {
        if (!wants(0))
            return;
        auto g = slot(0).data();
        const double v = node.op == Op::Sum ? up[0] : up[0] / static_cast<double>(g.size());
        for (double& x : g)
            x += v;
        return;
    }
    case Op::Square: {
        if (!wants(0))
            return;
        const auto a = nodes[node.parents[0]].value.data();
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += 2.0 * a[i] * up[i];
        return;
    }
    case Op::Clamp: {
        if (!wants(0))
            return;
        const auto a = nodes[node.parents[0]].value.data();
        auto g = slot(0).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a[i] >= node.a && a[i] <= node.b)
                g[i] += up[i];
        return;
    }
    case Op::SoftmaxCrossEntropy: {
        if (!wants(0))
            return;
        const Tensor& p = node.saved;
        Tensor& g = slot(0);
        const std::size_t rows = p.rows(), cols = p.cols();
        const double w = up[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                g.at(r, c) += w * (p.at(r, c) - (node.indices[r] == c ? 1.0 : 0.0));
        return;
    }
    }
}

} // namespace detail
} // namespace scala::ad
