#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scala/autodiff/graph.hpp"
#include "scala/autodiff/tensor.hpp"

namespace scala::model {

enum class InputKind { Tokens, Features };
enum class TaskKind { Classification, Regression };
enum class Activation { Tanh, Relu };

const char* to_string(InputKind kind) noexcept;
const char* to_string(TaskKind kind) noexcept;
const char* to_string(Activation act) noexcept;
InputKind parse_input_kind(const std::string& s);
TaskKind parse_task_kind(const std::string& s);
Activation parse_activation(const std::string& s);

struct Architecture {
    InputKind input = InputKind::Tokens;
    TaskKind task = TaskKind::Classification;
    std::size_t vocab = 64;
    std::size_t embed_dim = 16;
    std::size_t seq_len = 8;
    // Input width of the feature path.
    std::size_t features = 0;
    std::vector<std::size_t> hidden{32, 32};
    Activation activation = Activation::Tanh;
    bool attention = false;
    std::size_t classes = 2;

    // Width of one row of the embedding tensor fed to the network body.
    std::size_t input_width() const noexcept { return input == InputKind::Tokens ? embed_dim : features; }
    std::size_t outputs() const noexcept { return task == TaskKind::Regression ? 1 : classes; }

    void validate() const;
    friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct TensorSlot {
    std::string name;
    ad::Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// One layer's parameters. Groups occupy contiguous ranges of the flat
// parameter vector in id order.
struct ParamGroup {
    std::size_t id = 0;
    std::string name;
    std::vector<TensorSlot> tensors;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::optional<double> alpha;
};

// A set of examples. Token batches carry `size * seq_len` ids in row-major
// order; feature batches carry a [size x F] matrix.
struct Batch {
    std::size_t size = 0;
    std::size_t seq_len = 0;
    std::vector<std::size_t> tokens;
    ad::Tensor features;
    std::vector<std::size_t> labels;
    std::vector<double> targets;

    bool has_tokens() const noexcept { return !tokens.empty(); }
    Batch slice(std::size_t begin, std::size_t count) const;
    Batch select(std::span<const std::size_t> rows) const;
    static Batch concat(std::span<const Batch> parts);
};

// Graph leaves for every parameter tensor of a model, in slot order.
struct BoundParams {
    std::vector<ad::Var> leaves;
};

struct ForwardResult {
    ad::Var logits;
    ad::Var embeddings;
};

class Model {
public:
    Model() = default;
    // Zero-initialized parameters.
    explicit Model(Architecture arch);
    Model(Architecture arch, std::vector<double> parameters);

    // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); embedding rows ~ U(-1, 1).
    static Model init(const Architecture& arch, std::uint64_t seed);

    const Architecture& arch() const noexcept { return arch_; }
    const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
    std::vector<ParamGroup>& groups() noexcept { return groups_; }
    std::size_t group_count() const noexcept { return groups_.size(); }

    std::span<const double> parameters() const noexcept { return params_; }
    std::span<double> parameters() noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    void set_parameters(std::span<const double> values);

    std::span<const double> group_values(std::size_t i) const;
    std::span<double> group_values(std::size_t i);
    std::span<double> tensor_values(const std::string& group, const std::string& tensor);

    BoundParams bind(ad::Graph& graph, bool trainable) const;

    // Embedding tensor of a batch: looked-up rows [size*seq_len x d] for
    // tokens, the feature matrix itself otherwise.
    ad::Var embed(ad::Graph& graph, const BoundParams& params, const Batch& batch) const;
    ad::Var forward_from_embeddings(const BoundParams& params, ad::Var embeddings) const;
    ForwardResult forward(ad::Graph& graph, const BoundParams& params, const Batch& batch) const;

    // Cross-entropy for classification, mean squared error for regression.
    ad::Var task_loss(ad::Var logits, const Batch& batch) const;

    // Packs leaf gradients into the flat parameter layout.
    std::vector<double> flat_gradient(const ad::Gradients& grads, const BoundParams& params) const;

    // Graph-free conveniences.
    ad::Tensor lookup(const Batch& batch) const;
    ad::Tensor predict(const Batch& batch) const;
    ad::Tensor predict_from_embeddings(const ad::Tensor& embeddings) const;

private:
    void build_layout();

    Architecture arch_;
    std::vector<ParamGroup> groups_;
    std::vector<double> params_;
};

// Fraction of rows whose arg-max logit equals the label.
double accuracy(const ad::Tensor& logits, std::span<const std::size_t> labels);

} // namespace scala::model
