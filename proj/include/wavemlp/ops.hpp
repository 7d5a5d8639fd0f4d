#pragma once

#include <wavemlp/tape.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Differentiable tensor operations. Every op evaluates eagerly, records its
// output on the tape of its inputs and registers the matching gradient rule.
//
// Broadcasting is restricted to trailing dimensions: in a binary op one
// operand's shape must be a suffix of the other's.

namespace wavemlp {

namespace detail {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
    if (!a.valid() || a.tape() != b.tape()) throw ContractError("operands live on different tapes");
    return *a.tape();
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, std::string_view op) {
    if (is_suffix(a, b)) return a;
    if (is_suffix(b, a)) return b;
    throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                         " are not trailing-broadcast compatible");
}

/// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                             to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

/// Four-accumulator dot product; fixed summation order keeps results deterministic.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
    T s0{0}, s1{0}, s2{0}, s3{0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T, typename F, typename DA, typename DB>
Var<T> binary(std::string_view name, const Var<T>& a, const Var<T>& b, F f, DA dfa, DB dfb) {
    Tape<T>& tape = same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    Shape shape = broadcast_shape(av.shape(), bv.shape(), name);
    const std::size_t n = numel(shape);
    const std::size_t na = av.size();
    const std::size_t nb = bv.size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i % na], bv[i % nb]);
    const std::size_t ia = a.id();
    const std::size_t ib = b.id();
    return tape.record(name, std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        const Tensor<T>& y = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad_accum(ia);
            for (std::size_t i = 0; i < n; ++i) ga[i % na] += g[i] * dfa(x[i % na], y[i % nb]);
        }
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad_accum(ib);
            for (std::size_t i = 0; i < n; ++i) gb[i % nb] += g[i] * dfb(x[i % na], y[i % nb]);
        }
    });
}

template <typename T, typename F, typename DF>
Var<T> unary(std::string_view name, const Var<T>& a, F f, DF df) {
    Tape<T>& tape = *a.tape();
    const Tensor<T>& av = a.value();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const std::size_t ia = a.id();
    return tape.record(name, std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i]);
    });
}

template <typename T>
constexpr T gelu_coeff = T(0.044715);

template <typename T>
constexpr T sqrt_2_over_pi = T(0.79788456080286535587989211986876);

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; }, [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    return detail::binary<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

/// atan2(y, x); the gradient at the origin is defined as (0, 0).
template <typename T>
Var<T> atan2(const Var<T>& y, const Var<T>& x) {
    return detail::binary<T>(
        "atan2", y, x, [](T a, T b) { return std::atan2(a, b); },
        [](T a, T b) {
            const T r2 = a * a + b * b;
            return r2 == T{0} ? T{0} : b / r2;
        },
        [](T a, T b) {
            const T r2 = a * a + b * b;
            return r2 == T{0} ? T{0} : -a / r2;
        });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    return detail::unary<T>("scale", a, [s](T x) { return s * x; }, [s](T) { return s; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return scale(a, T{-1});
}

template <typename T>
Var<T> cos(const Var<T>& a) {
    return detail::unary<T>("cos", a, [](T x) { return std::cos(x); }, [](T x) { return -std::sin(x); });
}

template <typename T>
Var<T> sin(const Var<T>& a) {
    return detail::unary<T>("sin", a, [](T x) { return std::sin(x); }, [](T x) { return std::cos(x); });
}

/// Throws DomainError on negative input. The derivative at 0 is taken as 0.
template <typename T>
Var<T> sqrt(const Var<T>& a) {
    for (T v : a.value().data()) {
        if (v < T{0}) throw DomainError("sqrt of negative value " + std::to_string(static_cast<double>(v)));
    }
    return detail::unary<T>(
        "sqrt", a, [](T x) { return std::sqrt(x); },
        [](T x) { return x == T{0} ? T{0} : T{0.5} / std::sqrt(x); });
}

/// Subgradient at 0 is 0.
template <typename T>
Var<T> abs(const Var<T>& a) {
    return detail::unary<T>(
        "abs", a, [](T x) { return std::abs(x); },
        [](T x) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}

template <typename T>
T gelu_value(T x) {
    const T u = detail::sqrt_2_over_pi<T> * (x + detail::gelu_coeff<T> * x * x * x);
    return T{0.5} * x * (T{1} + std::tanh(u));
}

template <typename T>
T gelu_derivative(T x) {
    const T u = detail::sqrt_2_over_pi<T> * (x + detail::gelu_coeff<T> * x * x * x);
    const T th = std::tanh(u);
    const T du = detail::sqrt_2_over_pi<T> * (T{1} + T{3} * detail::gelu_coeff<T> * x * x);
    return T{0.5} * (T{1} + th) + T{0.5} * x * (T{1} - th * th) * du;
}

/// GELU, tanh approximation.
template <typename T>
Var<T> gelu(const Var<T>& a) {
    return detail::unary<T>("gelu", a, gelu_value<T>, gelu_derivative<T>);
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    Tape<T>& tape = detail::same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
        throw DimensionError("matmul: incompatible shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()));
    }
    const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) detail::axpy(av[i * k + p], &bv[p * n], &out[i * n], n);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record("matmul", std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ia);
        const Tensor<T>& y = t.value(ib);
        if (t.requires_grad(ia)) {
            // dA = dC * B^T
            Tensor<T>& ga = t.grad_accum(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += detail::dot(&g[i * n], &y[p * n], n);
        }
        if (t.requires_grad(ib)) {
            // dB = A^T * dC
            Tensor<T>& gb = t.grad_accum(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) detail::axpy(x[i * k + p], &g[i * n], &gb[p * n], n);
        }
    });
}

/// Per-token linear map over the last axis: y[..., o] = sum_i W[o, i] x[..., i].
/// The weight layout is [out, in].
template <typename T>
Var<T> channel_fc(const Var<T>& x, const Var<T>& w) {
    Tape<T>& tape = detail::same_tape(x, w);
    const Tensor<T>& xv = x.value();
    const Tensor<T>& wv = w.value();
    if (xv.rank() == 0 || wv.rank() != 2 || wv.shape()[1] != xv.shape().back()) {
        throw DimensionError("channel_fc: input " + to_string(xv.shape()) + " incompatible with weight " +
                             to_string(wv.shape()));
    }
    const std::size_t in = wv.shape()[1], out_ch = wv.shape()[0];
    const std::size_t tokens = xv.size() / in;
    Shape shape = xv.shape();
    shape.back() = out_ch;
    Tensor<T> out(shape);
    for (std::size_t n = 0; n < tokens; ++n) {
        const T* xr = &xv[n * in];
        T* yr = &out[n * out_ch];
        for (std::size_t o = 0; o < out_ch; ++o) yr[o] = detail::dot(xr, &wv[o * in], in);
    }
    const std::size_t ix = x.id(), iw = w.id();
    return tape.record("channel_fc", std::move(out), {x, w}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xs = t.value(ix);
        const Tensor<T>& ws = t.value(iw);
        if (t.requires_grad(ix)) {
            Tensor<T>& gx = t.grad_accum(ix);
            for (std::size_t n = 0; n < tokens; ++n)
                for (std::size_t o = 0; o < out_ch; ++o) detail::axpy(g[n * out_ch + o], &ws[o * in], &gx[n * in], in);
        }
        if (t.requires_grad(iw)) {
            Tensor<T>& gw = t.grad_accum(iw);
            for (std::size_t n = 0; n < tokens; ++n)
                for (std::size_t o = 0; o < out_ch; ++o) detail::axpy(g[n * out_ch + o], &xs[n * in], &gw[o * in], in);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and layout

template <typename T>
Var<T> reduce_sum(const Var<T>& a, std::size_t axis) {
    const Tensor<T>& av = a.value();
    const auto s = detail::split_axis(av.shape(), axis, "reduce_sum");
    Shape shape = av.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor<T> out(shape);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.extent; ++j)
            for (std::size_t q = 0; q < s.inner; ++q) out[o * s.inner + q] += av[(o * s.extent + j) * s.inner + q];
    const std::size_t ia = a.id();
    return a.tape()->record("reduce_sum", std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t j = 0; j < s.extent; ++j)
                for (std::size_t q = 0; q < s.inner; ++q) ga[(o * s.extent + j) * s.inner + q] += g[o * s.inner + q];
    });
}

/// Sum of all elements as a rank-0 tensor.
template <typename T>
Var<T> sum(const Var<T>& a) {
    const Tensor<T>& av = a.value();
    T total{0};
    for (T v : av.data()) total += v;
    const std::size_t ia = a.id();
    return a.tape()->record("sum", Tensor<T>::scalar(total), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (auto& v : ga.data()) v += g[0];
    });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
    return scale(sum(a), T{1} / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return a.tape()->record("reshape", std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

namespace detail {

/// For each output element of `shape` with axes ax0/ax1 swapped, the linear
/// index of the corresponding input element.
inline std::vector<std::size_t> swap_axes_index(const Shape& in_shape, std::size_t ax0, std::size_t ax1) {
    const std::size_t rank = in_shape.size();
    std::vector<std::size_t> in_stride(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
    Shape out_shape = in_shape;
    std::swap(out_shape[ax0], out_shape[ax1]);
    std::vector<std::size_t> out_stride_in = in_stride;
    std::swap(out_stride_in[ax0], out_stride_in[ax1]);

    const std::size_t n = numel(in_shape);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
        map[i] = src;
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out_shape[d]) {
                src += out_stride_in[d];
                break;
            }
            src -= out_stride_in[d] * (out_shape[d] - 1);
            idx[d] = 0;
        }
    }
    return map;
}

} // namespace detail

/// Swaps two axes.
template <typename T>
Var<T> transpose(const Var<T>& a, std::size_t ax0, std::size_t ax1) {
    const Tensor<T>& av = a.value();
    if (ax0 >= av.rank() || ax1 >= av.rank()) {
        throw DimensionError("transpose: axes out of range for shape " + to_string(av.shape()));
    }
    Shape shape = av.shape();
    std::swap(shape[ax0], shape[ax1]);
    auto map = detail::swap_axes_index(av.shape(), ax0, ax1);
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = av[map[i]];
    const std::size_t ia = a.id();
    return a.tape()->record("transpose", std::move(out), {a},
                            [ia, map = std::move(map)](Tape<T>& t, const Tensor<T>& g) {
                                Tensor<T>& ga = t.grad_accum(ia);
                                for (std::size_t i = 0; i < map.size(); ++i) ga[map[i]] += g[i];
                            });
}

/// Matrix transpose of a rank-2 tensor.
template <typename T>
Var<T> transpose(const Var<T>& a) {
    if (a.value().rank() != 2) throw DimensionError("transpose() without axes needs a matrix");
    return transpose(a, 0, 1);
}

/// Inserts exact zeros before/after along an axis.
template <typename T>
Var<T> pad_zeros(const Var<T>& a, std::size_t axis, std::size_t before, std::size_t after) {
    const Tensor<T>& av = a.value();
    const auto s = detail::split_axis(av.shape(), axis, "pad_zeros");
    const std::size_t len = s.extent + before + after;
    Shape shape = av.shape();
    shape[axis] = len;
    Tensor<T> out(shape);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(&av[o * s.extent * s.inner], s.extent * s.inner, &out[(o * len + before) * s.inner]);
    const std::size_t ia = a.id();
    return a.tape()->record("pad_zeros", std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t o = 0; o < s.outer; ++o)
            detail::axpy(T{1}, &g[(o * len + before) * s.inner], &ga[o * s.extent * s.inner], s.extent * s.inner);
    });
}

/// Contiguous window [start, start + len) along an axis.
template <typename T>
Var<T> slice_window(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
    const Tensor<T>& av = a.value();
    const auto s = detail::split_axis(av.shape(), axis, "slice_window");
    if (len == 0 || start + len > s.extent) {
        throw DimensionError("slice_window: window [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") outside extent " + std::to_string(s.extent));
    }
    Shape shape = av.shape();
    shape[axis] = len;
    Tensor<T> out(shape);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(&av[(o * s.extent + start) * s.inner], len * s.inner, &out[o * len * s.inner]);
    const std::size_t ia = a.id();
    return a.tape()->record("slice_window", std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t o = 0; o < s.outer; ++o)
            detail::axpy(T{1}, &g[o * len * s.inner], &ga[(o * s.extent + start) * s.inner], len * s.inner);
    });
}

/// Repeats `a` over leading dimensions so that it takes `shape`.
template <typename T>
Var<T> broadcast_to(const Var<T>& a, Shape shape) {
    const Tensor<T>& av = a.value();
    if (!is_suffix(shape, av.shape())) {
        throw DimensionError("broadcast_to: " + to_string(av.shape()) + " is not a suffix of " + to_string(shape));
    }
    const std::size_t n = numel(shape), na = av.size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < n; i += na) std::copy_n(av.data().data(), na, &out[i]);
    const std::size_t ia = a.id();
    return a.tape()->record("broadcast_to", std::move(out), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& ga = t.grad_accum(ia);
        for (std::size_t i = 0; i < n; i += na) detail::axpy(T{1}, &g[i], ga.data().data(), na);
    });
}

// ---------------------------------------------------------------------------
// Fused layers

/// Standardises each token over its last axis (mean 0, variance 1 with the
/// given epsilon) and applies a per-channel affine transform.
template <typename T>
Var<T> normalize(const Var<T>& x, const Var<T>& scale_v, const Var<T>& shift_v, T eps = T(1e-5)) {
    Tape<T>& tape = detail::same_tape(x, scale_v);
    detail::same_tape(x, shift_v);
    const Tensor<T>& xv = x.value();
    if (xv.rank() == 0) throw DimensionError("normalize: scalar input");
    const std::size_t c = xv.shape().back();
    if (scale_v.value().shape() != Shape{c} || shift_v.value().shape() != Shape{c}) {
        throw DimensionError("normalize: scale/shift must have shape [" + std::to_string(c) + "]");
    }
    const std::size_t rows = xv.size() / c;
    const Tensor<T>& sc = scale_v.value();
    const Tensor<T>& sh = shift_v.value();
    std::vector<T> xhat(xv.size());
    std::vector<T> inv_std(rows);
    Tensor<T> out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = &xv[r * c];
        T mu{0};
        for (std::size_t i = 0; i < c; ++i) mu += xr[i];
        mu /= static_cast<T>(c);
        T var{0};
        for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<T>(c);
        const T is = T{1} / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t i = 0; i < c; ++i) {
            const T h = (xr[i] - mu) * is;
            xhat[r * c + i] = h;
            out[r * c + i] = h * sc[i] + sh[i];
        }
    }
    const std::size_t ix = x.id(), is_id = scale_v.id(), ih = shift_v.id();
    return tape.record(
        "normalize", std::move(out), {x, scale_v, shift_v},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& scv = t.value(is_id);
            if (t.requires_grad(is_id)) {
                Tensor<T>& gs = t.grad_accum(is_id);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < c; ++i) gs[i] += g[r * c + i] * xhat[r * c + i];
            }
            if (t.requires_grad(ih)) {
                Tensor<T>& gh = t.grad_accum(ih);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < c; ++i) gh[i] += g[r * c + i];
            }
            if (t.requires_grad(ix)) {
                Tensor<T>& gx = t.grad_accum(ix);
                for (std::size_t r = 0; r < rows; ++r) {
                    T m1{0}, m2{0};
                    for (std::size_t i = 0; i < c; ++i) {
                        const T dh = g[r * c + i] * scv[i];
                        m1 += dh;
                        m2 += dh * xhat[r * c + i];
                    }
                    m1 /= static_cast<T>(c);
                    m2 /= static_cast<T>(c);
                    for (std::size_t i = 0; i < c; ++i) {
                        const T dh = g[r * c + i] * scv[i];
                        gx[r * c + i] += inv_std[r] * (dh - m1 - xhat[r * c + i] * m2);
                    }
                }
            }
        });
}

/// Mean softmax cross-entropy of logits [batch, classes] against integer labels.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
    const Tensor<T>& lv = logits.value();
    if (lv.rank() != 2 || lv.shape()[0] != labels.size()) {
        throw DimensionError("softmax_cross_entropy: logits " + to_string(lv.shape()) + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t b = lv.shape()[0], k = lv.shape()[1];
    std::vector<T> prob(lv.size());
    std::vector<int> lab(labels.begin(), labels.end());
    T loss{0};
    for (std::size_t i = 0; i < b; ++i) {
        if (lab[i] < 0 || static_cast<std::size_t>(lab[i]) >= k) throw DimensionError("label out of range");
        const T* row = &lv[i * k];
        const T mx = *std::max_element(row, row + k);
        T z{0};
        for (std::size_t j = 0; j < k; ++j) {
            prob[i * k + j] = std::exp(row[j] - mx);
            z += prob[i * k + j];
        }
        for (std::size_t j = 0; j < k; ++j) prob[i * k + j] /= z;
        loss += -(row[lab[i]] - mx - std::log(z));
    }
    loss /= static_cast<T>(b);
    const std::size_t il = logits.id();
    return logits.tape()->record(
        "softmax_cross_entropy", Tensor<T>::scalar(loss), {logits},
        [=, prob = std::move(prob), lab = std::move(lab)](Tape<T>& t, const Tensor<T>& g) {
            Tensor<T>& gl = t.grad_accum(il);
            const T s = g[0] / static_cast<T>(b);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    gl[i * k + j] += s * (prob[i * k + j] - (static_cast<int>(j) == lab[i] ? T{1} : T{0}));
        });
}

/// Inverted dropout. p == 0 returns the input unchanged.
template <typename T, typename Rng>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
    if (p == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - p);
    const T s = static_cast<T>(1.0 / (1.0 - p));
    Tensor<T> mask(x.shape());
    for (auto& m : mask.data()) m = keep(rng) ? s : T{0};
    Var<T> mv = x.tape()->constant(std::move(mask));
    return mul(x, mv);
}

} // namespace wavemlp
