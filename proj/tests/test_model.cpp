#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "scala/autodiff/ops.hpp"
#include "scala/errors.hpp"
#include "scala/model/checkpoint.hpp"
#include "scala/model/model.hpp"
#include "support/batches.hpp"
#include "support/fd_check.hpp"

namespace scala::model {
namespace {

using testing::random_feature_batch;
using testing::random_token_batch;
using testing::small_feature_arch;
using testing::small_token_arch;

TEST(Model, IdentityTableGathersRow) {
    Architecture a;
    a.vocab = 2;
    a.embed_dim = 2;
    a.seq_len = 1;
    a.hidden = {};
    Model m(a);
    auto table = m.tensor_values("embedding", "table");
    table[0] = 1.0;
    table[3] = 1.0;
    Batch b;
    b.size = 1;
    b.seq_len = 1;
    b.tokens = {0};
    EXPECT_EQ(m.lookup(b), ad::Tensor::matrix({{1.0, 0.0}}));
    b.tokens = {1};
    EXPECT_EQ(m.lookup(b), ad::Tensor::matrix({{0.0, 1.0}}));
}

TEST(Model, ZeroHeadGivesUniformSoftmax) {
    std::mt19937_64 rng(1);
    Model m = Model::init(small_token_arch(), 3);
    for (double& v : m.group_values(m.group_count() - 1))
        v = 0.0;
    const ad::Tensor logits = m.predict(random_token_batch(m.arch(), 5, rng));
    for (double v : logits.data())
        EXPECT_EQ(v, 0.0);
    ad::Graph g;
    const ad::Tensor p = ad::softmax(g.constant(logits)).value();
    for (double v : p.data())
        EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Model, InitIsReproducible) {
    const Architecture a = small_token_arch();
    const Model m1 = Model::init(a, 7), m2 = Model::init(a, 7), m3 = Model::init(a, 8);
    EXPECT_TRUE(std::equal(m1.parameters().begin(), m1.parameters().end(), m2.parameters().begin()));
    EXPECT_FALSE(std::equal(m1.parameters().begin(), m1.parameters().end(), m3.parameters().begin()));
}

TEST(Model, InitRespectsFanInBounds) {
    const Model m = Model::init(small_token_arch(), 11);
    for (const ParamGroup& g : m.groups()) {
        const double bound = g.name == "embedding" ? 1.0 : 1.0 / std::sqrt(double(g.tensors.front().shape[0]));
        for (double v : m.group_values(g.id))
            EXPECT_LE(std::abs(v), bound);
    }
}

TEST(Model, GroupLayout) {
    Architecture a = small_token_arch();
    EXPECT_EQ(Model(a).group_count(), 4u);
    a.attention = true;
    const Model m(a);
    ASSERT_EQ(m.group_count(), 5u);
    EXPECT_EQ(m.groups()[1].name, "attention");
    std::size_t offset = 0;
    for (const ParamGroup& g : m.groups()) {
        EXPECT_EQ(g.offset, offset);
        offset += g.size;
    }
    EXPECT_EQ(offset, m.parameter_count());
    a.hidden = {3, 3, 3, 3};
    EXPECT_EQ(Model(a).group_count(), 7u);
}

TEST(Model, ForwardIsDeterministic) {
    std::mt19937_64 rng(2);
    const Model m = Model::init(small_token_arch(), 5);
    const Batch b = random_token_batch(m.arch(), 6, rng);
    EXPECT_EQ(m.predict(b), m.predict(b));
}

TEST(Model, ForwardMatchesForwardFromEmbeddings) {
    std::mt19937_64 rng(3);
    for (bool attention : {false, true}) {
        Architecture a = small_token_arch();
        a.attention = attention;
        const Model m = Model::init(a, 9);
        const Batch b = random_token_batch(a, 4, rng);
        const ad::Tensor emb = m.lookup(b);
        EXPECT_EQ(m.predict(b), m.predict_from_embeddings(emb));
        ad::Tensor plus_zero = emb;
        for (double& v : plus_zero.data())
            v += 0.0;
        EXPECT_EQ(m.predict(b), m.predict_from_embeddings(plus_zero));
    }
    const Model f = Model::init(small_feature_arch(), 4);
    const Batch fb = random_feature_batch(f.arch(), 4, rng);
    EXPECT_EQ(f.predict(fb), f.predict_from_embeddings(fb.features));
}

TEST(Model, SmallPerturbationMovesLogitsByOrderOmega) {
    std::mt19937_64 rng(4);
    const Model m = Model::init(small_token_arch(), 12);
    const Batch b = random_token_batch(m.arch(), 8, rng);
    const ad::Tensor emb = m.lookup(b);
    const ad::Tensor base = m.predict_from_embeddings(emb);
    const double omega = 1e-5;

    // Local Lipschitz constant probed with a larger displacement.
    auto max_shift = [&](double radius, std::uint64_t seed) {
        std::mt19937_64 r(seed);
        std::uniform_real_distribution<double> u(-radius, radius);
        ad::Tensor y = emb;
        for (double& v : y.data())
            v += u(r);
        const ad::Tensor out = m.predict_from_embeddings(y);
        double d = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i)
            d = std::max(d, std::abs(out[i] - base[i]));
        return d;
    };
    double lipschitz = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s)
        lipschitz = std::max(lipschitz, max_shift(1e-3, s) / 1e-3);
    for (std::uint64_t s = 100; s < 108; ++s) {
        const double d = max_shift(omega, s);
        EXPECT_GT(d, 0.0);
        EXPECT_LE(d, 2.0 * lipschitz * omega);
    }
}

TEST(Model, ShapeErrors) {
    std::mt19937_64 rng(5);
    const Model m = Model::init(small_token_arch(), 1);
    Batch b = random_token_batch(m.arch(), 2, rng);
    b.seq_len = 2;
    EXPECT_THROW(m.predict(b), ShapeError);
    EXPECT_THROW(m.predict_from_embeddings(ad::Tensor({6, 3})), ShapeError);
    EXPECT_THROW(Model(m.arch(), std::vector<double>(3)), ShapeError);
    Architecture bad = small_token_arch();
    bad.classes = 0;
    EXPECT_THROW(Model{bad}, std::exception);
}

TEST(Model, ParameterGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    for (bool attention : {false, true}) {
        Architecture a = small_token_arch();
        a.attention = attention;
        Model m = Model::init(a, 21);
        const Batch b = random_token_batch(a, 3, rng);
        auto loss_at = [&](std::span<const double> x, std::vector<double>* grad) {
            Model copy(a, std::vector<double>(x.begin(), x.end()));
            ad::Graph g;
            const BoundParams p = copy.bind(g, true);
            ad::Var loss = copy.task_loss(copy.forward(g, p, b).logits, b);
            const double v = loss.value().item();
            if (grad)
                *grad = copy.flat_gradient(g.backward(loss), p);
            return v;
        };
        std::vector<double> x(m.parameters().begin(), m.parameters().end()), grad;
        loss_at(x, &grad);
        std::vector<double> numeric(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double keep = x[i];
            x[i] = keep + 1e-5;
            const double up = loss_at(x, nullptr);
            x[i] = keep - 1e-5;
            const double down = loss_at(x, nullptr);
            x[i] = keep;
            numeric[i] = (up - down) / 2e-5;
        }
        EXPECT_LT(testing::relative_error(ad::Tensor::vector(grad), ad::Tensor::vector(numeric)), 1e-6);
    }
}

TEST(Model, RegressionLossIsMeanSquaredError) {
    Architecture a = small_feature_arch(2);
    a.task = TaskKind::Regression;
    a.hidden = {};
    Model m(a);
    m.tensor_values("head", "weight")[0] = 1.0;
    Batch b;
    b.size = 2;
    b.features = ad::Tensor::matrix({{1.0, 0.0}, {3.0, 0.0}});
    b.targets = {0.0, 1.0};
    ad::Graph g;
    const BoundParams p = m.bind(g, false);
    EXPECT_DOUBLE_EQ(m.task_loss(m.forward(g, p, b).logits, b).value().item(), (1.0 + 4.0) / 2.0);
}

TEST(Model, BatchSliceSelectConcat) {
    std::mt19937_64 rng(7);
    const Architecture a = small_token_arch();
    const Batch b = random_token_batch(a, 6, rng);
    const Batch parts[] = {b.slice(0, 2), b.slice(2, 4)};
    const Batch joined = Batch::concat(parts);
    EXPECT_EQ(joined.tokens, b.tokens);
    EXPECT_EQ(joined.labels, b.labels);
    const std::size_t rows[] = {5, 0};
    const Batch picked = b.select(rows);
    EXPECT_EQ(picked.size, 2u);
    EXPECT_EQ(picked.labels[0], b.labels[5]);
    EXPECT_EQ(std::vector<std::size_t>(picked.tokens.begin(), picked.tokens.begin() + 3),
              std::vector<std::size_t>(b.tokens.begin() + 15, b.tokens.end()));
}

TEST(Model, AccuracyCountsArgmax) {
    const ad::Tensor logits = ad::Tensor::matrix({{0.1, 0.9}, {2.0, -1.0}, {0.0, 1.0}});
    const std::size_t labels[] = {1, 0, 0};
    EXPECT_DOUBLE_EQ(accuracy(logits, labels), 2.0 / 3.0);
}

TEST(Checkpoint, RoundTripIsExact) {
    Architecture a = small_token_arch();
    a.attention = true;
    const Model m = Model::init(a, 99);
    const auto path = std::filesystem::temp_directory_path() / "scala_ckpt_roundtrip.json";
    save_checkpoint(m, path);
    const Model back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.arch(), m.arch());
    ASSERT_EQ(back.parameter_count(), m.parameter_count());
    for (std::size_t i = 0; i < m.parameter_count(); ++i)
        EXPECT_EQ(back.parameters()[i], m.parameters()[i]);
}

TEST(Checkpoint, RejectsMismatchedLayout) {
    const Model m = Model::init(small_token_arch(), 1);
    nlohmann::json j = to_json(m);
    j["tensors"][0]["data"].erase(0);
    EXPECT_THROW(from_json(j), std::exception);
    j = to_json(m);
    j["format"] = "other";
    EXPECT_THROW(from_json(j), std::exception);
}

} // namespace
} // namespace scala::model
