#include "scala/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "scala/autodiff/ops.hpp"
#include "scala/errors.hpp"

namespace scala::model {

const char* to_string(InputKind kind) noexcept {
    return kind == InputKind::Tokens ? "tokens" : "features";
}

const char* to_string(TaskKind kind) noexcept {
    return kind == TaskKind::Classification ? "classification" : "regression";
}

const char* to_string(Activation act) noexcept {
    return act == Activation::Tanh ? "tanh" : "relu";
}

InputKind parse_input_kind(const std::string& s) {
    if (s == "tokens")
        return InputKind::Tokens;
    if (s == "features")
        return InputKind::Features;
    throw std::invalid_argument("unknown input kind '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "classification")
        return TaskKind::Classification;
    if (s == "regression")
        return TaskKind::Regression;
    throw std::invalid_argument("unknown task kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "tanh")
        return Activation::Tanh;
    if (s == "relu")
        return Activation::Relu;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

void Architecture::validate() const {
    if (input == InputKind::Tokens && (vocab == 0 || embed_dim == 0 || seq_len == 0))
        throw std::invalid_argument("token model needs positive vocab, embed_dim and seq_len");
    if (input == InputKind::Features && features == 0)
        throw std::invalid_argument("feature model needs a positive feature width");
    if (input == InputKind::Features && attention)
        throw std::invalid_argument("attention block needs the token input path");
    if (std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h == 0; }))
        throw std::invalid_argument("hidden widths must be positive");
    if (task == TaskKind::Classification && classes < 2)
        throw std::invalid_argument("classification needs at least two classes");
}

// ---------------------------------------------------------------------------
// Batch

Batch Batch::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > size)
        throw std::out_of_range("batch slice outside batch");
    std::vector<std::size_t> rows(count);
    for (std::size_t i = 0; i < count; ++i)
        rows[i] = begin + i;
    return select(rows);
}

Batch Batch::select(std::span<const std::size_t> rows) const {
    Batch out;
    out.size = rows.size();
    out.seq_len = seq_len;
    if (has_tokens()) {
        out.tokens.reserve(rows.size() * seq_len);
        for (std::size_t r : rows) {
            if (r >= size)
                throw std::out_of_range("batch row outside batch");
            out.tokens.insert(out.tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(r * seq_len),
                              tokens.begin() + static_cast<std::ptrdiff_t>((r + 1) * seq_len));
        }
    }
    if (!features.empty()) {
        const std::size_t f = features.cols();
        std::vector<double> values;
        values.reserve(rows.size() * f);
        for (std::size_t r : rows) {
            if (r >= size)
                throw std::out_of_range("batch row outside batch");
            auto row = features.data().subspan(r * f, f);
            values.insert(values.end(), row.begin(), row.end());
        }
        out.features = ad::Tensor::matrix(rows.size(), f, std::move(values));
    }
    for (std::size_t r : rows) {
        if (!labels.empty())
            out.labels.push_back(labels[r]);
        if (!targets.empty())
            out.targets.push_back(targets[r]);
    }
    return out;
}

Batch Batch::concat(std::span<const Batch> parts) {
    Batch out;
    if (parts.empty())
        return out;
    out.seq_len = parts.front().seq_len;
    std::vector<double> feats;
    std::size_t fcols = 0;
    for (const Batch& b : parts) {
        out.size += b.size;
        out.tokens.insert(out.tokens.end(), b.tokens.begin(), b.tokens.end());
        out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
        out.targets.insert(out.targets.end(), b.targets.begin(), b.targets.end());
        if (!b.features.empty()) {
            fcols = b.features.cols();
            feats.insert(feats.end(), b.features.data().begin(), b.features.data().end());
        }
    }
    if (fcols > 0)
        out.features = ad::Tensor::matrix(out.size, fcols, std::move(feats));
    return out;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    build_layout();
}

Model::Model(Architecture arch, std::vector<double> parameters) : arch_(std::move(arch)) {
    arch_.validate();
    build_layout();
    if (parameters.size() != params_.size())
        throw ShapeError("model expects " + std::to_string(params_.size()) + " parameters, got " +
                         std::to_string(parameters.size()));
    params_ = std::move(parameters);
}

void Model::build_layout() {
    groups_.clear();
    std::size_t offset = 0;
    auto add_group = [&](std::string name, std::vector<std::pair<std::string, ad::Shape>> tensors) {
        ParamGroup g;
        g.id = groups_.size();
        g.name = std::move(name);
        g.offset = offset;
        for (auto& [tname, shape] : tensors) {
            TensorSlot s;
            s.name = tname;
            s.size = ad::element_count(shape);
            s.shape = std::move(shape);
            s.offset = offset;
            offset += s.size;
            g.tensors.push_back(std::move(s));
        }
        g.size = offset - g.offset;
        groups_.push_back(std::move(g));
    };

    const std::size_t width = arch_.input_width();
    if (arch_.input == InputKind::Tokens)
        add_group("embedding", {{"table", {arch_.vocab, arch_.embed_dim}}});
    if (arch_.attention)
        add_group("attention", {{"query", {width, width}}, {"key", {width, width}}, {"value", {width, width}}});
    std::size_t in = width;
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
        const std::size_t out = arch_.hidden[i];
        add_group("layer" + std::to_string(i + 1), {{"weight", {in, out}}, {"bias", {out}}});
        in = out;
    }
    add_group("head", {{"weight", {in, arch_.outputs()}}, {"bias", {arch_.outputs()}}});
    params_.assign(offset, 0.0);
}

Model Model::init(const Architecture& arch, std::uint64_t seed) {
    Model m(arch);
    std::mt19937_64 rng(seed);
    for (const ParamGroup& g : m.groups_) {
        // Every tensor of a layer shares the fan-in of the layer's first tensor.
        const TensorSlot& first = g.tensors.front();
        const double bound = g.name == "embedding" ? 1.0 : 1.0 / std::sqrt(static_cast<double>(first.shape[0]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = g.offset; i < g.offset + g.size; ++i)
            m.params_[i] = dist(rng);
    }
    return m;
}

void Model::set_parameters(std::span<const double> values) {
    if (values.size() != params_.size())
        throw ShapeError("set_parameters: length mismatch");
    std::copy(values.begin(), values.end(), params_.begin());
}

std::span<const double> Model::group_values(std::size_t i) const {
    const ParamGroup& g = groups_.at(i);
    return std::span<const double>(params_).subspan(g.offset, g.size);
}

std::span<double> Model::group_values(std::size_t i) {
    const ParamGroup& g = groups_.at(i);
    return std::span<double>(params_).subspan(g.offset, g.size);
}

std::span<double> Model::tensor_values(const std::string& group, const std::string& tensor) {
    for (const ParamGroup& g : groups_) {
        if (g.name != group)
            continue;
        for (const TensorSlot& s : g.tensors)
            if (s.name == tensor)
                return std::span<double>(params_).subspan(s.offset, s.size);
    }
    throw std::out_of_range("no parameter tensor " + group + "." + tensor);
}

BoundParams Model::bind(ad::Graph& graph, bool trainable) const {
    BoundParams out;
    for (const ParamGroup& g : groups_) {
        for (const TensorSlot& s : g.tensors) {
            auto first = params_.begin() + static_cast<std::ptrdiff_t>(s.offset);
            ad::Tensor t(s.shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(s.size)));
            out.leaves.push_back(trainable ? graph.variable(std::move(t)) : graph.constant(std::move(t)));
        }
    }
    return out;
}

ad::Var Model::embed(ad::Graph& graph, const BoundParams& params, const Batch& batch) const {
    if (arch_.input == InputKind::Tokens) {
        if (batch.seq_len != arch_.seq_len || batch.tokens.size() != batch.size * arch_.seq_len)
            throw ShapeError("token batch does not match model sequence length");
        return ad::embedding(params.leaves.at(0), batch.tokens);
    }
    if (batch.features.rank() != 2 || batch.features.cols() != arch_.features || batch.features.rows() != batch.size)
        throw ShapeError("feature batch " + ad::shape_string(batch.features.shape()) + " does not match model width " +
                         std::to_string(arch_.features));
    return graph.constant(batch.features);
}

ad::Var Model::forward_from_embeddings(const BoundParams& params, ad::Var y) const {
    const std::size_t width = arch_.input_width();
    if (y.value().rank() != 2 || y.value().cols() != width)
        throw ShapeError("embedding tensor " + ad::shape_string(y.shape()) + " has wrong width for model");

    std::size_t slot = 0;
    ad::Var h = y;
    if (arch_.input == InputKind::Tokens) {
        ++slot;
        const std::size_t len = arch_.seq_len;
        if (y.value().rows() % len != 0)
            throw ShapeError("embedding rows not a multiple of the sequence length");
        if (arch_.attention) {
            const ad::Var wq = params.leaves.at(slot++);
            const ad::Var wk = params.leaves.at(slot++);
            const ad::Var wv = params.leaves.at(slot++);
            const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(width));
            const std::size_t n = y.value().rows() / len;
            std::vector<ad::Var> rows;
            rows.reserve(n);
            for (std::size_t b = 0; b < n; ++b) {
                ad::Var e = ad::slice_rows(y, b * len, len);
                ad::Var q = ad::matmul(e, wq);
                ad::Var k = ad::matmul(e, wk);
                ad::Var v = ad::matmul(e, wv);
                ad::Var attn = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_d));
                rows.push_back(ad::add(e, ad::matmul(attn, v)));
            }
            h = ad::concat_rows(rows);
        }
        h = ad::segment_mean(h, len);
    }

    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
        const ad::Var w = params.leaves.at(slot++);
        const ad::Var b = params.leaves.at(slot++);
        h = ad::add_bias(ad::matmul(h, w), b);
        h = arch_.activation == Activation::Tanh ? ad::tanh(h) : ad::relu(h);
    }
    const ad::Var w = params.leaves.at(slot++);
    const ad::Var b = params.leaves.at(slot++);
    return ad::add_bias(ad::matmul(h, w), b);
}

ForwardResult Model::forward(ad::Graph& graph, const BoundParams& params, const Batch& batch) const {
    ad::Var e = embed(graph, params, batch);
    return {forward_from_embeddings(params, e), e};
}

ad::Var Model::task_loss(ad::Var logits, const Batch& batch) const {
    if (arch_.task == TaskKind::Classification) {
        for (std::size_t label : batch.labels)
            if (label >= arch_.classes)
                throw std::out_of_range("label outside class range");
        return ad::softmax_cross_entropy(logits, batch.labels);
    }
    if (batch.targets.size() != logits.value().rows())
        throw ShapeError("regression targets do not match batch");
    ad::Var t = logits.graph().constant(ad::Tensor::matrix(batch.targets.size(), 1, batch.targets));
    return ad::mean(ad::square(ad::sub(logits, t)));
}

std::vector<double> Model::flat_gradient(const ad::Gradients& grads, const BoundParams& params) const {
    std::vector<double> out(params_.size(), 0.0);
    std::size_t slot = 0;
    for (const ParamGroup& g : groups_) {
        for (const TensorSlot& s : g.tensors) {
            const ad::Tensor& t = grads.wrt(params.leaves.at(slot++));
            std::copy(t.data().begin(), t.data().end(), out.begin() + static_cast<std::ptrdiff_t>(s.offset));
        }
    }
    return out;
}

ad::Tensor Model::lookup(const Batch& batch) const {
    ad::Graph g;
    BoundParams p = bind(g, false);
    return embed(g, p, batch).value();
}

ad::Tensor Model::predict(const Batch& batch) const {
    ad::Graph g;
    BoundParams p = bind(g, false);
    return forward(g, p, batch).logits.value();
}

ad::Tensor Model::predict_from_embeddings(const ad::Tensor& embeddings) const {
    ad::Graph g;
    BoundParams p = bind(g, false);
    return forward_from_embeddings(p, g.constant(embeddings)).value();
}

double accuracy(const ad::Tensor& logits, std::span<const std::size_t> labels) {
    if (labels.empty())
        return 0.0;
    const std::size_t cols = logits.cols();
    std::size_t hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        auto row = logits.data().subspan(r * cols, cols);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        hits += best == labels[r] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

} // namespace scala::model
