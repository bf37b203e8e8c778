#include <cmath>

#include "scala/autodiff/ops.hpp"
#include "scala/errors.hpp"
#include "scala/optimizer/optimizer.hpp"

namespace scala::opt {

LossValue task_only_loss(const model::Model& model, const model::ForwardResult& clean, const model::Batch& batch) {
    LossValue out;
    out.var = model.task_loss(clean.logits, batch);
    out.task = out.value = out.var.value().item();
    return out;
}

LossValue composed_loss(const model::Model& model, const model::BoundParams& params,
                        const model::ForwardResult& clean, const model::Batch& batch,
                        adv::AdvOutcome* outcome, const ad::Tensor& gamma, adv::RegularizerKind kind,
                        double lambda) {
    if (!(lambda >= 0.0))
        throw std::invalid_argument("composed_loss: lambda must be non-negative");
    LossValue out = task_only_loss(model, clean, batch);
    if (outcome == nullptr || lambda == 0.0)
        return out;

    ad::Graph& g = clean.logits.graph();
    const ad::Tensor& emb = clean.embeddings.value();
    ad::Tensor delta = outcome->y_final;
    if (delta.shape() != emb.shape())
        throw ShapeError("composed_loss: adversarial embeddings do not match the batch");
    for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] -= emb[i];
    ad::Var y = ad::add(clean.embeddings, g.constant(std::move(delta)));
    ad::Var r = adv::regularizer(g.constant(gamma), model.forward_from_embeddings(params, y), kind);
    out.regularizer = r.value().item();
    outcome->r_value = out.regularizer;
    out.var = ad::add(out.var, ad::scale(r, lambda));
    out.value = out.var.value().item();
    if (!std::isfinite(out.value))
        throw NumericalError("composed loss is not finite");
    return out;
}

} // namespace scala::opt
