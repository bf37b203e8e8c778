#include <algorithm>

#include "scala/diagnostics/diagnostics.hpp"
#include "scala/errors.hpp"

namespace scala::diag {

std::vector<GroupRange> group_ranges(const model::Model& model) {
    std::vector<GroupRange> out;
    for (const model::ParamGroup& g : model.groups())
        out.push_back({g.offset, g.size});
    return out;
}

std::vector<GroupRange> single_group(std::size_t n) {
    return {GroupRange{0, n}};
}

ad::Objective task_objective(const model::Model& model, const model::Batch& batch) {
    return [m = model, b = batch](std::span<const double> x, std::span<double> grad) mutable {
        m.set_parameters(x);
        ad::Graph g;
        const model::BoundParams p = m.bind(g, true);
        ad::Var loss = m.task_loss(m.forward(g, p, b).logits, b);
        const double value = loss.value().item();
        const std::vector<double> flat = m.flat_gradient(g.backward(loss), p);
        if (grad.size() != flat.size())
            throw ShapeError("task objective: gradient buffer has wrong length");
        std::copy(flat.begin(), flat.end(), grad.begin());
        return value;
    };
}

} // namespace scala::diag
