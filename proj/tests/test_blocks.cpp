#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace wavemlp;
using testutil::randn;

namespace {

BlockParams<double> random_block(std::size_t d, std::size_t e, std::uint64_t seed, PhaseMode mode = PhaseMode::ChannelFC) {
    std::mt19937_64 rng(seed);
    return make_block<double>(d, e, 3, 5, mode, rng);
}

template <typename F>
Tensor<double> run(F&& f, const Tensor<double>& x) {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    return f(tape, tape.leaf(x, false)).value();
}

// Direct loop form of the stem: gather each p x p patch as (row, col, channel) and project.
Tensor<double> naive_patch_embed(const Tensor<double>& x, const Tensor<double>& w, std::size_t p) {
    const auto& s = x.shape();
    const std::size_t B = s[0], H = s[1], W = s[2], C = s[3], O = w.shape()[0];
    const std::size_t hp = (H + p - 1) / p, wp = (W + p - 1) / p;
    Tensor<double> out({B, hp, wp, O});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < hp; ++i)
            for (std::size_t j = 0; j < wp; ++j)
                for (std::size_t o = 0; o < O; ++o) {
                    double acc = 0;
                    for (std::size_t r = 0; r < p; ++r)
                        for (std::size_t c = 0; c < p; ++c)
                            for (std::size_t ch = 0; ch < C; ++ch) {
                                const std::size_t y = i * p + r, xx = j * p + c;
                                if (y >= H || xx >= W) continue;
                                acc += w.at({o, (r * p + c) * C + ch}) * x.at({b, y, xx, ch});
                            }
                    out.at({b, i, j, o}) = acc;
                }
    return out;
}

} // namespace

TEST(Block, ZeroWeightsGiveResidualIdentity) {
    BlockParams<double> b = random_block(6, 4, 1);
    b.for_each_param([](const char*, Tensor<double>& t) { t.fill(0.0); });
    const Tensor<double> x = randn({2, 3, 4, 6}, 2);
    EXPECT_EQ(run([&](Tape<double>& t, Var<double> v) { return block_forward(t, v, b); }, x), x);
}

TEST(Block, ZeroSecondMlpLayerMakesChannelMixingIdentity) {
    BlockParams<double> b = random_block(6, 4, 3);
    b.mlp_fc2.fill(0.0);
    const Tensor<double> x = randn({1, 4, 4, 6}, 4);
    EXPECT_EQ(run([&](Tape<double>& t, Var<double> v) { return channel_mlp_forward(t, v, b); }, x), x);
}

TEST(Block, HiddenWidthFollowsExpansion) {
    const BlockParams<double> b = random_block(8, 4, 5);
    EXPECT_EQ(b.mlp_fc1.shape(), (Shape{32, 8}));
    EXPECT_EQ(b.mlp_fc2.shape(), (Shape{8, 32}));
    EXPECT_EQ(b.patm_h.window, 3u);
    EXPECT_EQ(b.patm_w.window, 5u);
    EXPECT_EQ(b.patm_h.axis, MixAxis::Height);
    EXPECT_EQ(b.patm_w.axis, MixAxis::Width);
    std::mt19937_64 rng(0);
    EXPECT_THROW(make_block<double>(8, 0, 3, 3, PhaseMode::None, rng), ConfigError);
}

TEST(Block, ShapePreserved) {
    for (PhaseMode m : {PhaseMode::None, PhaseMode::Identity, PhaseMode::ChannelFC, PhaseMode::DepthWise}) {
        const BlockParams<double> b = random_block(5, 2, 6, m);
        for (std::size_t h : {1u, 2u, 7u}) {
            const Tensor<double> x = randn({2, h, 3, 5}, h);
            EXPECT_EQ(run([&](Tape<double>& t, Var<double> v) { return block_forward(t, v, b); }, x).shape(), x.shape());
        }
    }
}

TEST(Block, TokenMixingIsSumOfBranches) {
    const BlockParams<double> b = random_block(4, 2, 7);
    const Tensor<double> x = randn({1, 3, 3, 4}, 8);
    const Tensor<double> out = run([&](Tape<double>& t, Var<double> v) { return token_mixing_forward(t, v, b); }, x);
    const Tensor<double> n = run([&](Tape<double>& t, Var<double> v) { return normalize(t, v, b.norm1_scale, b.norm1_shift); }, x);
    const Tensor<double> h = run([&](Tape<double>& t, Var<double> v) { return patm_forward(t, v, b.patm_h); }, n);
    const Tensor<double> w = run([&](Tape<double>& t, Var<double> v) { return patm_forward(t, v, b.patm_w); }, n);
    const Tensor<double> c = run([&](Tape<double>& t, Var<double> v) { return channel_fc(v, t.leaf(b.branch_fc)); }, n);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out[i], x[i] + h[i] + w[i] + c[i], 1e-12);
}

TEST(Normalize, ZeroMeanUnitVariancePerToken) {
    const Tensor<double> x = randn({3, 5, 7}, 9);
    const Tensor<double> one({7}, 1.0), zero({7});
    const Tensor<double> y = run([&](Tape<double>& t, Var<double> v) { return normalize(t, v, one, zero); }, x);
    for (std::size_t tok = 0; tok < 15; ++tok) {
        double m = 0, v = 0;
        for (std::size_t c = 0; c < 7; ++c) m += y[tok * 7 + c];
        m /= 7;
        for (std::size_t c = 0; c < 7; ++c) v += (y[tok * 7 + c] - m) * (y[tok * 7 + c] - m);
        v /= 7;
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v, 1.0, 1e-3);
    }
}

TEST(Normalize, AffineAndConstantToken) {
    const Tensor<double> x({1, 3}, {2.0, 2.0, 2.0});
    const Tensor<double> sc({3}, {1, 2, 3}), sh({3}, {0.5, -1, 4});
    const Tensor<double> y = run([&](Tape<double>& t, Var<double> v) { return normalize(t, v, sc, sh); }, x);
    EXPECT_EQ(y, sh.reshaped({1, 3}));
}

TEST(PatchEmbed, Shapes) {
    std::mt19937_64 rng(10);
    const StemParams<double> s1 = make_stem<double>(4, 3, 64, rng);
    const Tensor<double> img({1, 224, 224, 3}, 0.25);
    EXPECT_EQ(run([&](Tape<double>& t, Var<double> v) { return patch_embed(t, v, s1); }, img).shape(),
              (Shape{1, 56, 56, 64}));
    const StemParams<double> s2 = make_stem<double>(2, 64, 128, rng);
    const Tensor<double> grid({1, 56, 56, 64}, 0.5);
    EXPECT_EQ(run([&](Tape<double>& t, Var<double> v) { return patch_embed(t, v, s2); }, grid).shape(),
              (Shape{1, 28, 28, 128}));
    EXPECT_THROW(run([&](Tape<double>& t, Var<double> v) { return patch_embed(t, v, s2); }, img), DimensionError);
}

TEST(PatchEmbed, MatchesNaiveGatherIncludingPadding) {
    std::mt19937_64 rng(11);
    for (std::size_t p : {1u, 2u, 3u, 4u}) {
        const StemParams<double> s = make_stem<double>(p, 2, 5, rng);
        for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {7, 5}, {3, 10}}) {
            const Tensor<double> x = randn({2, h, w, 2}, p * 100 + h * 10 + w);
            const Tensor<double> y = run([&](Tape<double>& t, Var<double> v) { return patch_embed(t, v, s); }, x);
            EXPECT_LT(max_abs_diff(y, naive_patch_embed(x, s.weight, p)), 1e-12) << p << " " << h << "x" << w;
        }
    }
}

TEST(PatchEmbed, ConstantImageGivesConstantTokens) {
    std::mt19937_64 rng(12);
    const StemParams<double> s = make_stem<double>(4, 3, 6, rng);
    const Tensor<double> y =
        run([&](Tape<double>& t, Var<double> v) { return patch_embed(t, v, s); }, Tensor<double>({1, 16, 12, 3}, 0.7));
    for (std::size_t tok = 1; tok < 12; ++tok)
        for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(y[tok * 6 + c], y[c]);
}

TEST(BlockGradients, TokenMixingChannelMlpAndStem) {
    for (PhaseMode m : {PhaseMode::None, PhaseMode::ChannelFC, PhaseMode::DepthWise}) {
        BlockParams<double> b = random_block(4, 2, 13, m);
        Tensor<double> x = randn({2, 3, 4, 4}, 14);
        std::vector<Tensor<double>*> params{&x};
        b.for_each_param([&](const char*, Tensor<double>& t) { params.push_back(&t); });
        const Tensor<double> probe = randn({2, 3, 4, 4}, 15);
        const auto r = grad_check_params<double>(
            [&](Tape<double>& t) { return sum(mul(block_forward(t, t.leaf(x), b), t.constant(probe))); }, params);
        EXPECT_TRUE(r.passed) << to_string(m) << " max_rel=" << r.max_rel_error;
    }
    std::mt19937_64 rng(16);
    StemParams<double> s = make_stem<double>(2, 3, 4, rng);
    Tensor<double> img = randn({1, 5, 5, 3}, 17);
    const auto r = grad_check_params<double>(
        [&](Tape<double>& t) {
            Var<double> y = patch_embed(t, t.leaf(img), s);
            return mean(mul(y, y));
        },
        {&img, &s.weight});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}
