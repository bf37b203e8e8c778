#pragma once

// Random instances of every differentiable op, each reduced to a scalar
// through a fixed random projection so every output entry is exercised.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "random.hpp"
#include "scala/autodiff/ops.hpp"

namespace scala::testing {

struct OpInstance {
    LossBuilder build;
    std::vector<ad::Tensor> inputs;
};

struct OpCase {
    std::string name;
    std::function<OpInstance(std::mt19937_64&)> make;
};

// Values bounded away from a set of kinks so central differences stay smooth.
inline ad::Tensor away_from(ad::Shape shape, std::mt19937_64& rng, std::vector<double> kinks, double margin) {
    ad::Tensor t = random_tensor(std::move(shape), rng);
    for (double& v : t.data())
        for (double k : kinks)
            if (std::abs(v - k) < margin)
                v = k + (v >= k ? margin : -margin);
    return t;
}

inline LossBuilder projected(std::function<ad::Var(const std::vector<ad::Var>&)> op, ad::Tensor weights) {
    return [op, weights](ad::Graph& g, const std::vector<ad::Var>& leaves) {
        ad::Var out = op(leaves);
        if (out.value().size() == 1)
            return ad::scale(out, weights[0]);
        return ad::sum(ad::mul(out, g.constant(weights)));
    };
}

inline std::vector<OpCase> op_catalog() {
    using ad::Shape;
    using ad::Var;
    std::vector<OpCase> cases;
    auto unary = [&](std::string name, Shape shape, std::function<Var(Var)> op, std::vector<double> kinks = {},
                     double lo = -1.0, double hi = 1.0) {
        cases.push_back({name, [=](std::mt19937_64& rng) {
                             ad::Tensor x = kinks.empty() ? random_tensor(shape, rng, lo, hi)
                                                          : away_from(shape, rng, kinks, 0.05);
                             ad::Graph g;
                             const Shape out_shape = op(g.constant(x)).shape();
                             return OpInstance{projected([op](const std::vector<Var>& l) { return op(l[0]); },
                                                         random_tensor(out_shape, rng)),
                                               {x}};
                         }});
    };
    auto binary = [&](std::string name, Shape sa, Shape sb, std::function<Var(Var, Var)> op) {
        cases.push_back({name, [=](std::mt19937_64& rng) {
                             ad::Tensor a = random_tensor(sa, rng);
                             ad::Tensor b = random_tensor(sb, rng);
                             ad::Graph g;
                             const Shape out_shape = op(g.constant(a), g.constant(b)).shape();
                             return OpInstance{
                                 projected([op](const std::vector<Var>& l) { return op(l[0], l[1]); },
                                           random_tensor(out_shape, rng)),
                                 {a, b}};
                         }});
    };

    binary("matmul", {3, 4}, {4, 2}, [](Var a, Var b) { return ad::matmul(a, b); });
    unary("transpose", {3, 4}, [](Var a) { return ad::transpose(a); });
    binary("add", {3, 4}, {3, 4}, [](Var a, Var b) { return ad::add(a, b); });
    binary("add_bias", {3, 4}, {4}, [](Var a, Var b) { return ad::add_bias(a, b); });
    binary("sub", {3, 4}, {3, 4}, [](Var a, Var b) { return ad::sub(a, b); });
    binary("mul", {3, 4}, {3, 4}, [](Var a, Var b) { return ad::mul(a, b); });
    unary("scale", {5}, [](Var a) { return ad::scale(a, 1.7); });
    unary("relu", {6}, [](Var a) { return ad::relu(a); }, {0.0});
    unary("tanh", {6}, [](Var a) { return ad::tanh(a); }, {}, -2.0, 2.0);
    unary("segment_mean", {6, 3}, [](Var a) { return ad::segment_mean(a, 3); });
    unary("slice_rows", {5, 3}, [](Var a) { return ad::slice_rows(a, 1, 3); });
    unary("softmax", {3, 4}, [](Var a) { return ad::softmax(a); }, {}, -3.0, 3.0);
    unary("log", {6}, [](Var a) { return ad::log(a); }, {}, 0.5, 2.0);
    unary("sum", {4, 3}, [](Var a) { return ad::sum(a); });
    unary("mean", {4, 3}, [](Var a) { return ad::mean(a); });
    unary("square", {5}, [](Var a) { return ad::square(a); });
    unary("clamp", {8}, [](Var a) { return ad::clamp(a, -0.5, 0.5); }, {-0.5, 0.5});

    cases.push_back({"concat_rows", [](std::mt19937_64& rng) {
                         std::vector<ad::Tensor> in{random_tensor({2, 3}, rng), random_tensor({3, 3}, rng)};
                         return OpInstance{projected(
                                               [](const std::vector<Var>& l) {
                                                   std::vector<Var> parts{l[0], l[1]};
                                                   return ad::concat_rows(parts);
                                               },
                                               random_tensor({5, 3}, rng)),
                                           in};
                     }});
    cases.push_back({"embedding", [](std::mt19937_64& rng) {
                         std::uniform_int_distribution<std::size_t> pick(0, 4);
                         std::vector<std::size_t> ids(7);
                         for (auto& id : ids)
                             id = pick(rng);
                         return OpInstance{projected([ids](const std::vector<Var>& l) { return ad::embedding(l[0], ids); },
                                                     random_tensor({7, 3}, rng)),
                                           {random_tensor({5, 3}, rng)}};
                     }});
    cases.push_back({"softmax_cross_entropy", [](std::mt19937_64& rng) {
                         std::uniform_int_distribution<std::size_t> pick(0, 2);
                         std::vector<std::size_t> labels(4);
                         for (auto& y : labels)
                             y = pick(rng);
                         return OpInstance{
                             projected([labels](const std::vector<Var>& l) { return ad::softmax_cross_entropy(l[0], labels); },
                                       random_tensor({1}, rng, 0.5, 1.5)),
                             {random_tensor({4, 3}, rng, -2.0, 2.0)}};
                     }});
    return cases;
}

} // namespace scala::testing
