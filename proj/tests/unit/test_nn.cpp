#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "e1/nn/attention.hpp"
#include "e1/nn/checkpoint.hpp"
#include "e1/nn/layers.hpp"
#include "e1/nn/optim.hpp"
#include "e1/nn/rope.hpp"
#include "e1/oracle/finite_diff.hpp"

using namespace e1;
using namespace e1::nn;

namespace {

ParamStore random_store(std::initializer_list<std::pair<std::string, Shape>> entries, std::uint64_t seed,
                        double scale = 1.0) {
    Rng rng(seed);
    ParamStore s;
    for (const auto& [name, shape] : entries) {
        RealArray a = rng.normal_array(shape);
        for (auto& v : a.values()) v *= scale;
        s.add(name, a);
    }
    return s;
}

template <typename Build>
double fd_error(const ParamStore& params, Build&& build) {
    auto [loss, grads] = forward_backward(params, build);
    auto fd = oracle::finite_diff_grad(
        [&](const ParamStore& p) {
            Graph g;
            Bound b(g, p, false);
            return g.value(build(g, b))[0];
        },
        params);
    return oracle::max_relative_error(grads, fd, 1e-6);
}

} // namespace

TEST(ForwardBackward, LinearAndQuadraticCases) {
    ParamStore p;
    p.add("w", RealArray::scalar(1.5));
    auto [y, g] = forward_backward(p, [](Graph& gr, const Bound& b) {
        return mul(b["w"], gr.constant(RealArray::scalar(2.0)));
    });
    EXPECT_DOUBLE_EQ(y, 3.0);
    EXPECT_DOUBLE_EQ(g.get("w")[0], 2.0);

    p.set("w", RealArray::scalar(3.0));
    auto [y2, g2] = forward_backward(p, [](Graph&, const Bound& b) { return mul(b["w"], b["w"]); });
    EXPECT_DOUBLE_EQ(y2, 9.0);
    EXPECT_DOUBLE_EQ(g2.get("w")[0], 6.0);
}

TEST(ForwardBackward, ShapeMismatchNamesOperation) {
    ParamStore p;
    p.add("a", RealArray::matrix(2, 3, 1.0));
    p.add("b", RealArray::matrix(2, 2, 1.0));
    try {
        forward_backward(p, [](Graph&, const Bound& b) { return sum(matmul(b["a"], b["b"])); });
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    }
}

TEST(ForwardBackward, ElementwiseOpsMatchFiniteDifferences) {
    auto p = random_store({{"a", {4, 3}}, {"b", {4, 3}}, {"bias", {3}}}, 1);
    auto build = [](Graph&, const Bound& b) {
        Var x = add_bias(b["a"], b["bias"]);
        Var y = add(mul(silu(x), tanh(b["b"])), softplus(sub(x, b["b"])));
        return mean(add(scale(y, 0.7), abs(b["b"])));
    };
    EXPECT_LT(fd_error(p, build), 1e-6);
}

TEST(ForwardBackward, StructuralOpsMatchFiniteDifferences) {
    auto p = random_store({{"a", {5, 2}}, {"b", {5, 3}}, {"gain", {5}}, {"shift", {5}}}, 2);
    RealArray target = Rng(3).normal_array({3, 5});
    auto build = [target](Graph&, const Bound& b) {
        Var c = concat_cols({b["a"], b["b"]});
        Var n = layer_norm(c, b["gain"], b["shift"]);
        Var picked = gather_rows(n, {4, 0, 4});
        Var seg = segment_sum(picked, {0, 1}, {1, 2});
        return add(mean_squared_error(picked, target), sum(mul(seg, seg)));
    };
    EXPECT_LT(fd_error(p, build), 1e-6);
}

TEST(ForwardBackward, TwoLayerTanhMlpMatchesFiniteDifferences) {
    Rng rng(11);
    Mlp mlp = Mlp::make("mlp", 3, 8, 2, 2, Activation::tanh);
    ParamStore p;
    mlp.init(p, rng);
    RealArray x = rng.normal_array({6, 3});
    RealArray y = rng.normal_array({6, 2});
    auto build = [&](Graph& g, const Bound& b) { return mean_squared_error(mlp(b, g.constant(x)), y); };
    EXPECT_LT(fd_error(p, build), 1e-4);
}

TEST(ForwardBackward, RopeAttentionBlockMatchesFiniteDifferences) {
    Rng rng(5);
    TransformerBlock block{"blk", 8, 2, 2, 10000.0};
    ParamStore p;
    block.init(p, rng);
    RealArray x = rng.normal_array({7, 8});
    RealArray y = rng.normal_array({7, 8});
    std::vector<Segment> segments{{0, 3}, {3, 4}};
    std::vector<double> positions{0, 1, 2, 0, 0.75, 1.5, 2.25};
    auto build = [&](Graph& g, const Bound& b) {
        return mean_squared_error(block(b, g.constant(x), segments, positions), y);
    };
    EXPECT_LT(fd_error(p, build), 1e-4);
}

TEST(Attention, SegmentsDoNotInteract) {
    Rng rng(9);
    RealArray q = rng.normal_array({5, 4}), k = rng.normal_array({5, 4}), v = rng.normal_array({5, 4});
    std::vector<double> pos{0, 1, 0, 1, 2};
    auto run = [&](const RealArray& values) {
        Graph g;
        return g.value(rope_attention(g.constant(q), g.constant(k), g.constant(values), {{0, 2}, {2, 3}}, pos, 2, 1e4));
    };
    RealArray v2 = v;
    for (std::size_t j = 0; j < 4; ++j) v2(4, j) += 10.0;
    RealArray a = run(v), b = run(v2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(r, j), b(r, j));
}

TEST(AdamW, SingleStepMatchesHandOracle) {
    ParamStore p;
    p.add("w", RealArray::scalar(1.0));
    Grads g;
    g.add("w", RealArray::scalar(1.0));
    AdamW opt(p, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.95, .weight_decay = 0.0, .eps = 1e-8});
    opt.step(p, g);
    // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
    EXPECT_NEAR(p.get("w")[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-12);
    EXPECT_EQ(opt.step_count(), 1u);

    Grads g2;
    g2.add("w", RealArray::scalar(-0.5));
    const double w1 = p.get("w")[0];
    opt.step(p, g2);
    const double m = 0.9 * 0.1 * 1.0 + 0.1 * -0.5;
    const double v = 0.95 * 0.05 * 1.0 + 0.05 * 0.25;
    const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.9025);
    EXPECT_NEAR(p.get("w")[0], w1 - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-12);
}

TEST(AdamW, ZeroGradientAndDecayOnlyCases) {
    ParamStore p;
    p.add("w", RealArray::scalar(1.0));
    Grads zero = p.zeros_like();
    AdamW plain(p, {.lr = 0.1});
    plain.step(p, zero);
    EXPECT_EQ(p.get("w")[0], 1.0);
    EXPECT_EQ(plain.step_count(), 1u);

    AdamW decay(p, {.lr = 0.1, .weight_decay = 0.1});
    decay.step(p, zero);
    EXPECT_NEAR(p.get("w")[0], 0.99, 1e-12);
}

TEST(AdamW, RejectsNonFiniteGradientWithName) {
    ParamStore p;
    p.add("layer.weight", RealArray::vector({1.0, 2.0}));
    Grads g = p.zeros_like();
    g[0].value[1] = std::nan("");
    AdamW opt(p, {});
    try {
        opt.step(p, g);
        FAIL();
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
    }
    EXPECT_EQ(opt.step_count(), 0u);
    EXPECT_EQ(p.get("layer.weight")[1], 2.0);
}

TEST(Ema, MatchesHandOracle) {
    ParamStore shadow;
    shadow.add("w", RealArray::vector({0.0, 4.0}));
    ParamStore params;
    params.add("w", RealArray::vector({2.0, 2.0}));
    Ema half(shadow, 0.5);
    half.update(params);
    EXPECT_EQ(half.shadow().get("w")[0], 1.0);
    EXPECT_EQ(half.shadow().get("w")[1], 3.0);

    Ema none(shadow, 0.0);
    none.update(params);
    EXPECT_EQ(none.shadow(), params);
    Ema frozen(shadow, 1.0);
    frozen.update(params);
    EXPECT_EQ(frozen.shadow(), shadow);

    Ema tracked(shadow, 0.9999);
    tracked.update(params);
    EXPECT_NEAR(tracked.shadow().get("w")[0], 0.0001 * 2.0, 1e-12);
    EXPECT_NEAR(tracked.shadow().get("w")[1], 0.9999 * 4.0 + 0.0001 * 2.0, 1e-12);
}

TEST(Ema, ShapeMismatchRejected) {
    ParamStore a;
    a.add("w", RealArray::vector({1.0}));
    ParamStore b;
    b.add("w", RealArray::vector({1.0, 2.0}));
    Ema e(a, 0.5);
    EXPECT_THROW(e.update(b), ShapeError);
}

TEST(Rope, IndexZeroIsIdentityAndNormIsPreserved) {
    Rng rng(21);
    RealArray v = rng.normal_array({6, 8});
    std::vector<double> zeros(6, 0.0);
    EXPECT_EQ(rope_apply(v, zeros), v);
    std::vector<double> idx{0.3, 1.7, 5.0, 12.25, 100.5, 3.0};
    RealArray r = rope_apply(v, idx);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(std::sqrt(squared_norm(r.row(i))), std::sqrt(squared_norm(v.row(i))), 1e-9);
}

TEST(Rope, LogitsDependOnRelativePositionOnly) {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        RealArray q = rng.normal_array({16}), k = rng.normal_array({16});
        const double i = rng.uniform(0, 20), j = rng.uniform(0, 20), c = rng.uniform(-50, 50);
        EXPECT_NEAR(rope_logit(q.span(), i, k.span(), j, 1e4), rope_logit(q.span(), i + c, k.span(), j + c, 1e4), 1e-9);
    }
}

TEST(Rope, RejectsOddWidth) {
    RealArray v = RealArray::matrix(2, 3);
    std::vector<double> idx{0, 1};
    EXPECT_THROW(rope_apply(v, idx), ShapeError);
}

TEST(PositionIndices, FractionalSpeechIndices) {
    auto eq = assign_position_indices(4, 4);
    EXPECT_EQ(eq.speech_indices, (std::vector<double>{0, 1, 2, 3}));
    auto half = assign_position_indices(2, 4);
    EXPECT_EQ(half.text_indices, (std::vector<double>{0, 1}));
    EXPECT_EQ(half.speech_indices, (std::vector<double>{0, 0.5, 1.0, 1.5}));
    auto third = assign_position_indices(3, 6);
    EXPECT_EQ(third.speech_indices.back(), 2.5);
    auto odd = assign_position_indices(5, 7);
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(odd.speech_indices[k], static_cast<double>(k) * 5.0 / 7.0);
    EXPECT_THROW(assign_position_indices(0, 3), DomainError);
    EXPECT_THROW(assign_position_indices(3, 0), DomainError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    ParamStore p = random_store({{"a.weight", {3, 4}}, {"a.bias", {4}}, {"s", {}}}, 31);
    p[0].value[0] = -0.0;
    p[0].value[1] = 1e-310;
    ParamStore back = decode_checkpoint(encode_checkpoint(p));
    ASSERT_EQ(back.size(), p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(back[i].name, p[i].name);
        EXPECT_EQ(back[i].value.shape(), p[i].value.shape());
        EXPECT_EQ(std::memcmp(back[i].value.data(), p[i].value.data(), p[i].value.size() * sizeof(double)), 0);
    }
    EXPECT_EQ(back.checksum(), p.checksum());
}

TEST(Checkpoint, CorruptInputsFailWithNamedErrors) {
    ParamStore p = random_store({{"w", {2, 2}}}, 32);
    std::string bytes = encode_checkpoint(p);
    std::string bad = bytes;
    bad[0] = 'X';
    try {
        decode_checkpoint(bad);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
    EXPECT_THROW(decode_checkpoint(encode_checkpoint(p, kCheckpointVersion + 1)), CheckpointVersionError);
}

TEST(Checkpoint, NamedStoresRoundTripThroughFile) {
    NamedStores stores;
    stores["teacher"] = random_store({{"w", {2}}}, 41);
    stores["fake"] = random_store({{"w", {2}}, {"b", {1}}}, 42);
    const auto path = std::filesystem::temp_directory_path() / "e1_named_stores.e1ck";
    save_stores(path.string(), stores);
    EXPECT_EQ(load_stores(path.string()), stores);
    std::filesystem::remove(path);
}

TEST(Gemm, RowResultsDoNotDependOnBatchComposition) {
    Rng rng(11);
    for (std::size_t k : {2u, 8u, 17u, 64u}) {
        for (std::size_t m : {1u, 2u, 16u, 32u, 128u}) {
            const RealArray b = rng.normal_array({k, m});
            const RealArray a = rng.normal_array({37, k});
            RealArray all({37, m});
            detail::gemm_nn(a.data(), b.data(), all.data(), 37, k, m);
            for (std::size_t start : {0u, 1u, 5u, 14u}) {
                for (std::size_t n = 1; n <= 9; ++n) {
                    RealArray part({n, m});
                    detail::gemm_nn(a.data() + start * k, b.data(), part.data(), n, k, m);
                    ASSERT_TRUE(std::equal(part.data(), part.data() + n * m, all.data() + start * m))
                        << "k=" << k << " m=" << m << " start=" << start << " n=" << n;
                }
            }
        }
    }
}
