#pragma once

#include <wavemlp/ops.hpp>

#include <algorithm>
#include <string>

// Shared loops for centred, zero-padded windowed sums along one axis with
// per-channel weights:
//
//   out[.., j, .., c] += sum_r w[r, c] * x[.., j + r - half, .., c]
//
// The tensor is viewed as [outer, extent, inner] around the mixing axis; the
// channel is the innermost axis so inner is a whole number of channel rows.

namespace wavemlp::detail {

struct WindowGeometry {
    AxisSplit split;
    std::size_t channels = 0;
    std::size_t window = 0;
    std::size_t half = 0;

    std::size_t r_begin(std::size_t j) const { return j >= half ? 0 : half - j; }
    std::size_t r_end(std::size_t j) const { return std::min(window, split.extent + half - j); }
};

inline WindowGeometry window_geometry(const Shape& x_shape, const Shape& w_shape, std::size_t axis,
                                      std::string_view op) {
    if (x_shape.size() < 2) throw DimensionError(std::string(op) + ": input needs a channel axis");
    if (axis + 1 >= x_shape.size()) {
        throw DimensionError(std::string(op) + ": mixing axis must precede the channel axis");
    }
    if (w_shape.size() != 2 || w_shape[1] != x_shape.back()) {
        throw DimensionError(std::string(op) + ": weight " + to_string(w_shape) + " incompatible with input " +
                             to_string(x_shape));
    }
    if (w_shape[0] % 2 == 0) {
        throw ConfigError(std::string(op) + ": window must be odd, got " + std::to_string(w_shape[0]));
    }
    WindowGeometry g;
    g.split = split_axis(x_shape, axis, op);
    g.channels = x_shape.back();
    g.window = w_shape[0];
    g.half = g.window / 2;
    return g;
}

/// out += mix(x, w)
template <typename T>
void window_mix_forward(const WindowGeometry& g, const T* x, const T* w, T* out) {
    const std::size_t L = g.split.extent, inner = g.split.inner, C = g.channels;
    for (std::size_t o = 0; o < g.split.outer; ++o) {
        for (std::size_t j = 0; j < L; ++j) {
            T* dst = out + (o * L + j) * inner;
            for (std::size_t r = g.r_begin(j); r < g.r_end(j); ++r) {
                const T* src = x + (o * L + j + r - g.half) * inner;
                const T* wr = w + r * C;
                for (std::size_t b = 0; b < inner; b += C)
                    for (std::size_t c = 0; c < C; ++c) dst[b + c] += wr[c] * src[b + c];
            }
        }
    }
}

/// gx += d mix / d x applied to g
template <typename T>
void window_mix_backward_input(const WindowGeometry& g, const T* grad, const T* w, T* gx) {
    const std::size_t L = g.split.extent, inner = g.split.inner, C = g.channels;
    for (std::size_t o = 0; o < g.split.outer; ++o) {
        for (std::size_t j = 0; j < L; ++j) {
            const T* src = grad + (o * L + j) * inner;
            for (std::size_t r = g.r_begin(j); r < g.r_end(j); ++r) {
                T* dst = gx + (o * L + j + r - g.half) * inner;
                const T* wr = w + r * C;
                for (std::size_t b = 0; b < inner; b += C)
                    for (std::size_t c = 0; c < C; ++c) dst[b + c] += wr[c] * src[b + c];
            }
        }
    }
}

/// gw += d mix / d w applied to g
template <typename T>
void window_mix_backward_weight(const WindowGeometry& g, const T* grad, const T* x, T* gw) {
    const std::size_t L = g.split.extent, inner = g.split.inner, C = g.channels;
    for (std::size_t o = 0; o < g.split.outer; ++o) {
        for (std::size_t j = 0; j < L; ++j) {
            const T* gj = grad + (o * L + j) * inner;
            for (std::size_t r = g.r_begin(j); r < g.r_end(j); ++r) {
                const T* xk = x + (o * L + j + r - g.half) * inner;
                T* gwr = gw + r * C;
                for (std::size_t b = 0; b < inner; b += C)
                    for (std::size_t c = 0; c < C; ++c) gwr[c] += gj[b + c] * xk[b + c];
            }
        }
    }
}

} // namespace wavemlp::detail

namespace wavemlp {

/// Depthwise 1-D correlation along `axis` with kernel w[window, channels],
/// centred and zero padded. Output shape equals input shape.
template <typename T>
Var<T> windowed_mix(const Var<T>& x, const Var<T>& w, std::size_t axis) {
    Tape<T>& tape = detail::same_tape(x, w);
    const auto geo = detail::window_geometry(x.shape(), w.shape(), axis, "windowed_mix");
    Tensor<T> out(x.shape());
    detail::window_mix_forward(geo, x.value().data().data(), w.value().data().data(), out.data().data());
    const std::size_t ix = x.id(), iw = w.id();
    return tape.record("windowed_mix", std::move(out), {x, w}, [=](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ix)) {
            detail::window_mix_backward_input(geo, g.data().data(), t.value(iw).data().data(),
                                              t.grad_accum(ix).data().data());
        }
        if (t.requires_grad(iw)) {
            detail::window_mix_backward_weight(geo, g.data().data(), t.value(ix).data().data(),
                                               t.grad_accum(iw).data().data());
        }
    });
}

} // namespace wavemlp
