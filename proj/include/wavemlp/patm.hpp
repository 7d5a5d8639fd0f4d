#pragma once

#include <wavemlp/ops.hpp>
#include <wavemlp/window_kernels.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <type_traits>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wavemlp {

/// How a PATM produces token phases.
enum class PhaseMode {
    None,      ///< all phases zero (plain windowed token-FC)
    Static,    ///< learned per-position phases, independent of the input
    Identity,  ///< phases copied from the input features
    ChannelFC, ///< per-token channel-FC of the input
    DepthWise, ///< per-channel length-3 convolution along the mixing axis
};

inline std::string_view to_string(PhaseMode m) {
    switch (m) {
    case PhaseMode::None: return "none";
    case PhaseMode::Static: return "static";
    case PhaseMode::Identity: return "identity";
    case PhaseMode::ChannelFC: return "channel_fc";
    case PhaseMode::DepthWise: return "depthwise";
    }
    return "?";
}

inline PhaseMode parse_phase_mode(std::string_view s) {
    if (s == "none") return PhaseMode::None;
    if (s == "static") return PhaseMode::Static;
    if (s == "identity") return PhaseMode::Identity;
    if (s == "channel_fc" || s == "channelfc") return PhaseMode::ChannelFC;
    if (s == "depthwise" || s == "depth_wise") return PhaseMode::DepthWise;
    throw ConfigError("unknown phase mode '" + std::string(s) + "'");
}

/// Spatial axis of a [batch, height, width, channels] token grid along which a
/// PATM mixes tokens. The enumerator value is the tensor axis.
enum class MixAxis : std::size_t { Height = 1, Width = 2 };

inline constexpr std::size_t kDepthWiseKernel = 3;

template <typename T>
struct PatmParams {
    MixAxis axis = MixAxis::Height;
    std::size_t window = 7;
    PhaseMode mode = PhaseMode::ChannelFC;

    Tensor<T> amplitude_fc; ///< [d, d]
    Tensor<T> phase_weight; ///< [d, d] ChannelFC, [3, d] DepthWise, [H, W, d] Static, empty otherwise
    Tensor<T> mix_real;     ///< [window, d], weights on amp * cos(theta)
    Tensor<T> mix_imag;     ///< [window, d], weights on amp * sin(theta)
    Tensor<T> output_fc;    ///< [d, d]

    std::size_t channels() const { return amplitude_fc.shape()[0]; }
    bool has_phase_weight() const { return mode == PhaseMode::ChannelFC || mode == PhaseMode::DepthWise || mode == PhaseMode::Static; }

    template <typename F>
    void for_each_param(F&& f) {
        f("amplitude_fc", amplitude_fc);
        if (has_phase_weight()) f("phase_weight", phase_weight);
        f("mix_real", mix_real);
        f("mix_imag", mix_imag);
        f("output_fc", output_fc);
    }
    template <typename F>
    void for_each_param(F&& f) const {
        f("amplitude_fc", amplitude_fc);
        if (has_phase_weight()) f("phase_weight", phase_weight);
        f("mix_real", mix_real);
        f("mix_imag", mix_imag);
        f("output_fc", output_fc);
    }
};

/// Parameter tensor shapes of one PATM, in for_each_param order.
inline std::vector<Shape> patm_param_shapes(std::size_t d, std::size_t window, PhaseMode mode,
                                            std::optional<std::pair<std::size_t, std::size_t>> static_hw = {}) {
    std::vector<Shape> shapes{{d, d}};
    switch (mode) {
    case PhaseMode::ChannelFC: shapes.push_back({d, d}); break;
    case PhaseMode::DepthWise: shapes.push_back({kDepthWiseKernel, d}); break;
    case PhaseMode::Static:
        if (!static_hw) throw ConfigError("static phase mode needs a fixed spatial size");
        shapes.push_back({static_hw->first, static_hw->second, d});
        break;
    default: break;
    }
    shapes.push_back({window, d});
    shapes.push_back({window, d});
    shapes.push_back({d, d});
    return shapes;
}

/// Builds a PATM with uniform(+-1/sqrt(fan_in)) weights; static phases are
/// uniform in [-pi, pi].
template <typename T, typename Rng>
PatmParams<T> make_patm(std::size_t d, MixAxis axis, std::size_t window, PhaseMode mode, Rng& rng,
                        std::optional<std::pair<std::size_t, std::size_t>> static_hw = {}) {
    if (window == 0 || window % 2 == 0) throw ConfigError("PATM window must be odd, got " + std::to_string(window));
    if (d == 0) throw ConfigError("PATM needs at least one channel");
    auto bound = [](std::size_t fan_in) { return static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in))); };
    PatmParams<T> p;
    p.axis = axis;
    p.window = window;
    p.mode = mode;
    p.amplitude_fc = uniform<T>({d, d}, -bound(d), bound(d), rng);
    switch (mode) {
    case PhaseMode::ChannelFC: p.phase_weight = uniform<T>({d, d}, -bound(d), bound(d), rng); break;
    case PhaseMode::DepthWise:
        p.phase_weight = uniform<T>({kDepthWiseKernel, d}, -bound(kDepthWiseKernel), bound(kDepthWiseKernel), rng);
        break;
    case PhaseMode::Static:
        if (!static_hw) throw ConfigError("static phase mode needs a fixed spatial size");
        p.phase_weight = uniform<T>({static_hw->first, static_hw->second, d}, -std::numbers::pi_v<T>,
                                    std::numbers::pi_v<T>, rng);
        break;
    default: break;
    }
    p.mix_real = uniform<T>({window, d}, -bound(window), bound(window), rng);
    p.mix_imag = uniform<T>({window, d}, -bound(window), bound(window), rng);
    p.output_fc = uniform<T>({d, d}, -bound(d), bound(d), rng);
    return p;
}

/// Amplitude branch: a plain channel-FC, no absolute value (signs are carried
/// by the phase interpretation).
template <typename T>
Var<T> compute_amplitude(const Var<T>& x, const Var<T>& amplitude_fc) {
    return channel_fc(x, amplitude_fc);
}

/// Token phases for the given estimator. `phase_weight` is ignored for None
/// and Identity.
template <typename T>
Var<T> estimate_phase(const Var<T>& x, PhaseMode mode, const Var<T>& phase_weight, MixAxis axis) {
    switch (mode) {
    case PhaseMode::None: return x.tape()->constant(Tensor<T>(x.shape()));
    case PhaseMode::Identity: return x;
    case PhaseMode::ChannelFC: return channel_fc(x, phase_weight);
    case PhaseMode::DepthWise: return windowed_mix(x, phase_weight, static_cast<std::size_t>(axis));
    case PhaseMode::Static: {
        const Shape& xs = x.shape();
        const Shape& ps = phase_weight.shape();
        if (xs.size() != 4 || ps.size() != 3 || xs[1] != ps[0] || xs[2] != ps[1] || xs[3] != ps[2]) {
            throw ConfigError("static phase grid " + to_string(ps) + " does not match input " + to_string(xs));
        }
        return broadcast_to(phase_weight, xs);
    }
    }
    throw ConfigError("unknown phase mode");
}

/// Phase-modulated windowed token aggregation along `axis`:
///
///   out[j] = sum_r mix_real[r] * (amp * cos(theta))[j + r - half]
///          + mix_imag[r] * (amp * sin(theta))[j + r - half]
///
/// per channel, zero padded outside the grid. Fused kernel: the real and
/// imaginary parts are formed once and reused in the backward pass.
template <typename T>
Var<T> aggregate_tokens(const Var<T>& amp, const Var<T>& theta, const Var<T>& mix_real, const Var<T>& mix_imag,
                        MixAxis axis) {
    Tape<T>& tape = detail::same_tape(amp, theta);
    detail::same_tape(amp, mix_real);
    detail::same_tape(amp, mix_imag);
    if (amp.shape() != theta.shape()) {
        throw DimensionError("aggregate_tokens: amplitude " + to_string(amp.shape()) + " vs phase " +
                             to_string(theta.shape()));
    }
    if (mix_real.shape() != mix_imag.shape()) throw DimensionError("aggregate_tokens: mixing weights differ in shape");
    const auto geo =
        detail::window_geometry(amp.shape(), mix_real.shape(), static_cast<std::size_t>(axis), "aggregate_tokens");

    const Tensor<T>& a = amp.value();
    const Tensor<T>& th = theta.value();
    const std::size_t n = a.size();
    std::vector<T> cs(n), sn(n), re(n), im(n);
    for (std::size_t i = 0; i < n; ++i) {
        cs[i] = std::cos(th[i]);
        sn[i] = std::sin(th[i]);
        re[i] = a[i] * cs[i];
        im[i] = a[i] * sn[i];
    }
    Tensor<T> out(a.shape());
    detail::window_mix_forward(geo, re.data(), mix_real.value().data().data(), out.data().data());
    detail::window_mix_forward(geo, im.data(), mix_imag.value().data().data(), out.data().data());

    const std::size_t ia = amp.id(), it = theta.id(), ir = mix_real.id(), ii = mix_imag.id();
    return tape.record(
        "aggregate_tokens", std::move(out), {amp, theta, mix_real, mix_imag},
        [=, cs = std::move(cs), sn = std::move(sn), re = std::move(re), im = std::move(im)](Tape<T>& t,
                                                                                          const Tensor<T>& g) {
            if (t.requires_grad(ir)) {
                detail::window_mix_backward_weight(geo, g.data().data(), re.data(), t.grad_accum(ir).data().data());
            }
            if (t.requires_grad(ii)) {
                detail::window_mix_backward_weight(geo, g.data().data(), im.data(), t.grad_accum(ii).data().data());
            }
            const bool need_a = t.requires_grad(ia), need_t = t.requires_grad(it);
            if (!need_a && !need_t) return;
            std::vector<T> g_re(n, T{0}), g_im(n, T{0});
            detail::window_mix_backward_input(geo, g.data().data(), t.value(ir).data().data(), g_re.data());
            detail::window_mix_backward_input(geo, g.data().data(), t.value(ii).data().data(), g_im.data());
            if (need_a) {
                Tensor<T>& ga = t.grad_accum(ia);
                for (std::size_t i = 0; i < n; ++i) ga[i] += g_re[i] * cs[i] + g_im[i] * sn[i];
            }
            if (need_t) {
                const Tensor<T>& av = t.value(ia);
                Tensor<T>& gt = t.grad_accum(it);
                for (std::size_t i = 0; i < n; ++i) gt[i] += av[i] * (g_im[i] * cs[i] - g_re[i] * sn[i]);
            }
        });
}

/// Intermediate values captured from a PATM forward pass.
template <typename T>
struct PatmTrace {
    Tensor<T> amplitude;
    Tensor<T> phase;
};

/// Full module: output_fc(aggregate(amplitude_fc(x), phase(x))).
template <typename T>
Var<T> patm_forward(Tape<T>& tape, const Var<T>& x, const PatmParams<T>& p, std::type_identity_t<PatmTrace<T>>* trace = nullptr) {
    if (x.shape().size() != 4 || x.shape()[3] != p.channels()) {
        throw DimensionError("patm_forward: expected [b,h,w," + std::to_string(p.channels()) + "] input, got " +
                             to_string(x.shape()));
    }
    Var<T> amp = compute_amplitude(x, tape.leaf(p.amplitude_fc));
    Var<T> pw = p.has_phase_weight() ? tape.leaf(p.phase_weight) : Var<T>{};
    Var<T> theta = estimate_phase(x, p.mode, pw, p.axis);
    Var<T> mixed = aggregate_tokens(amp, theta, tape.leaf(p.mix_real), tape.leaf(p.mix_imag), p.axis);
    if (trace) {
        trace->amplitude = amp.value();
        trace->phase = theta.value();
    }
    return channel_fc(mixed, tape.leaf(p.output_fc));
}

/// Multiply-accumulates per token for one PATM (1 MAC = 1 FLOP).
inline std::size_t patm_macs_per_token(std::size_t d, std::size_t window, PhaseMode mode) {
    std::size_t macs = 2 * d * d + 2 * window * d;
    if (mode == PhaseMode::ChannelFC) macs += d * d;
    if (mode == PhaseMode::DepthWise) macs += kDepthWiseKernel * d;
    return macs;
}

} // namespace wavemlp
