#pragma once

#include <wavemlp/ops.hpp>
#include <wavemlp/patm.hpp>

#include <optional>
#include <type_traits>
#include <random>
#include <string>
#include <utility>

namespace wavemlp {

/// One Wave-MLP unit: a token-mixing block (two axial PATMs plus a direct
/// channel-FC branch) followed by a channel-mixing MLP, each pre-normalised
/// inside a residual connection.
template <typename T>
struct BlockParams {
    PatmParams<T> patm_h;
    PatmParams<T> patm_w;
    Tensor<T> branch_fc;   ///< [d, d]
    Tensor<T> mlp_fc1;     ///< [e*d, d]
    Tensor<T> mlp_fc2;     ///< [d, e*d]
    Tensor<T> norm1_scale; ///< [d]
    Tensor<T> norm1_shift;
    Tensor<T> norm2_scale;
    Tensor<T> norm2_shift;
    std::size_t expansion = 4;

    std::size_t channels() const { return branch_fc.shape()[0]; }

    template <typename F>
    void for_each_param(F&& f) {
        f("norm1_scale", norm1_scale);
        f("norm1_shift", norm1_shift);
        patm_h.for_each_param([&](const char* n, auto& t) { f((std::string("patm_h.") + n).c_str(), t); });
        patm_w.for_each_param([&](const char* n, auto& t) { f((std::string("patm_w.") + n).c_str(), t); });
        f("branch_fc", branch_fc);
        f("norm2_scale", norm2_scale);
        f("norm2_shift", norm2_shift);
        f("mlp_fc1", mlp_fc1);
        f("mlp_fc2", mlp_fc2);
    }
    template <typename F>
    void for_each_param(F&& f) const {
        const_cast<BlockParams*>(this)->for_each_param(
            [&](const char* n, Tensor<T>& t) { f(n, static_cast<const Tensor<T>&>(t)); });
    }
};

/// Spatial sizes the two PATMs must be built for (static phase grids and
/// window-covers-everything configurations).
struct BlockSpatial {
    std::optional<std::pair<std::size_t, std::size_t>> hw;
};

template <typename T, typename Rng>
BlockParams<T> make_block(std::size_t d, std::size_t expansion, std::size_t window_h, std::size_t window_w,
                          PhaseMode mode, Rng& rng, BlockSpatial spatial = {}) {
    if (expansion == 0) throw ConfigError("expansion ratio must be positive");
    const auto bound = [](std::size_t fan_in) { return static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in))); };
    BlockParams<T> b;
    b.expansion = expansion;
    b.norm1_scale = Tensor<T>({d}, T{1});
    b.norm1_shift = Tensor<T>({d});
    b.patm_h = make_patm<T>(d, MixAxis::Height, window_h, mode, rng, spatial.hw);
    b.patm_w = make_patm<T>(d, MixAxis::Width, window_w, mode, rng, spatial.hw);
    b.branch_fc = uniform<T>({d, d}, -bound(d), bound(d), rng);
    b.norm2_scale = Tensor<T>({d}, T{1});
    b.norm2_shift = Tensor<T>({d});
    b.mlp_fc1 = uniform<T>({expansion * d, d}, -bound(d), bound(d), rng);
    b.mlp_fc2 = uniform<T>({d, expansion * d}, -bound(expansion * d), bound(expansion * d), rng);
    return b;
}

template <typename T>
struct BlockTrace {
    PatmTrace<T> patm_h;
    PatmTrace<T> patm_w;
};

/// Layer-style normalisation with the block's affine parameters.
template <typename T>
Var<T> normalize(Tape<T>& tape, const Var<T>& x, const Tensor<T>& scale, const Tensor<T>& shift) {
    return normalize(x, tape.leaf(scale), tape.leaf(shift));
}

/// x + patm_h(n) + patm_w(n) + branch_fc(n), with n = normalize(x).
template <typename T>
Var<T> token_mixing_forward(Tape<T>& tape, const Var<T>& x, const BlockParams<T>& b, std::type_identity_t<BlockTrace<T>>* trace = nullptr) {
    Var<T> n = normalize(tape, x, b.norm1_scale, b.norm1_shift);
    Var<T> h = patm_forward(tape, n, b.patm_h, trace ? &trace->patm_h : nullptr);
    Var<T> w = patm_forward(tape, n, b.patm_w, trace ? &trace->patm_w : nullptr);
    Var<T> c = channel_fc(n, tape.leaf(b.branch_fc));
    return add(x, add(add(h, w), c));
}

/// Optional regularisation applied inside the channel MLP. Default: none.
struct MlpDropout {
    double p = 0.0;
    std::mt19937_64* rng = nullptr;
};

/// x + fc2(gelu(fc1(normalize(x)))).
template <typename T>
Var<T> channel_mlp_forward(Tape<T>& tape, const Var<T>& x, const BlockParams<T>& b, MlpDropout drop = {}) {
    Var<T> n = normalize(tape, x, b.norm2_scale, b.norm2_shift);
    Var<T> hidden = gelu(channel_fc(n, tape.leaf(b.mlp_fc1)));
    if (drop.p > 0.0 && drop.rng) hidden = dropout(hidden, drop.p, *drop.rng);
    return add(x, channel_fc(hidden, tape.leaf(b.mlp_fc2)));
}

template <typename T>
Var<T> block_forward(Tape<T>& tape, const Var<T>& x, const BlockParams<T>& b, std::type_identity_t<BlockTrace<T>>* trace = nullptr,
                     MlpDropout drop = {}) {
    return channel_mlp_forward(tape, token_mixing_forward(tape, x, b, trace), b, drop);
}

/// Non-overlapping patch embedding / downsampling stem.
template <typename T>
struct StemParams {
    std::size_t patch = 4;
    Tensor<T> weight; ///< [c_out, patch*patch*c_in], input flattened as (row, col, channel)

    std::size_t in_channels() const { return weight.shape()[1] / (patch * patch); }
    std::size_t out_channels() const { return weight.shape()[0]; }

    template <typename F>
    void for_each_param(F&& f) {
        f("weight", weight);
    }
    template <typename F>
    void for_each_param(F&& f) const {
        f("weight", weight);
    }
};

template <typename T, typename Rng>
StemParams<T> make_stem(std::size_t patch, std::size_t c_in, std::size_t c_out, Rng& rng) {
    if (patch == 0 || c_in == 0 || c_out == 0) throw ConfigError("stem sizes must be positive");
    const std::size_t fan_in = patch * patch * c_in;
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    StemParams<T> s;
    s.patch = patch;
    s.weight = uniform<T>({c_out, fan_in}, -bound, bound, rng);
    return s;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Zero-pads height/width up to a multiple of the patch size, folds every
/// patch into the channel axis and projects it. [b,h,w,c] -> [b,ceil(h/p),ceil(w/p),c_out].
template <typename T>
Var<T> patch_embed(Tape<T>& tape, const Var<T>& x, const StemParams<T>& s) {
    const Shape& xs = x.shape();
    if (xs.size() != 4 || xs[0] == 0 || xs[1] == 0 || xs[2] == 0) {
        throw DimensionError("patch_embed: expected a non-empty [b,h,w,c] grid, got " + to_string(xs));
    }
    if (xs[3] != s.in_channels()) {
        throw DimensionError("patch_embed: input has " + std::to_string(xs[3]) + " channels, stem expects " +
                             std::to_string(s.in_channels()));
    }
    const std::size_t p = s.patch;
    const std::size_t hp = ceil_div(xs[1], p), wp = ceil_div(xs[2], p);
    Var<T> v = x;
    if (hp * p != xs[1]) v = pad_zeros(v, 1, 0, hp * p - xs[1]);
    if (wp * p != xs[2]) v = pad_zeros(v, 2, 0, wp * p - xs[2]);
    const std::size_t b = xs[0], c = xs[3];
    v = reshape(v, {b, hp, p, wp, p, c});
    v = transpose(v, 2, 3);
    v = reshape(v, {b, hp, wp, p * p * c});
    return channel_fc(v, tape.leaf(s.weight));
}

} // namespace wavemlp
