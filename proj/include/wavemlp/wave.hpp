#pragma once

#include <wavemlp/tape.hpp>
#include <wavemlp/ops.hpp>

#include <cmath>
#include <numbers>
#include <utility>

// Phasor algebra for wave-like tokens: a real amplitude paired with a phase in
// radians, z = a * exp(i * theta).

namespace wavemlp {

/// Maps an angle to the canonical interval (-pi, pi].
template <typename T>
T canonical_phase(T theta) {
    constexpr T two_pi = T{2} * std::numbers::pi_v<T>;
    T r = std::remainder(theta, two_pi);
    if (r <= -std::numbers::pi_v<T>) r += two_pi;
    if (r > std::numbers::pi_v<T>) r -= two_pi;
    return r;
}

template <typename T>
struct Phasor {
    T amplitude{0};
    T phase{0};

    Phasor() = default;
    Phasor(T amp, T theta) : amplitude(amp), phase(canonical_phase(theta)) {
        if (amp < T{0}) throw DomainError("phasor amplitude must be non-negative");
    }
};

template <typename T>
struct WaveGrid {
    Tensor<T> amplitude;
    Tensor<T> phase;

    WaveGrid() = default;
    WaveGrid(Tensor<T> amp, Tensor<T> theta) : amplitude(std::move(amp)), phase(std::move(theta)) {
        if (amplitude.shape() != phase.shape()) {
            throw DimensionError("wave grid amplitude " + to_string(amplitude.shape()) + " vs phase " +
                                 to_string(phase.shape()));
        }
    }
};

namespace detail {
template <typename T>
void check_amplitudes(T a1, T a2) {
    if (a1 < T{0} || a2 < T{0}) throw DomainError("superposition amplitudes must be non-negative");
}
} // namespace detail

/// Amplitude of a1*e^{i t1} + a2*e^{i t2}:
/// sqrt(a1^2 + a2^2 + 2 a1 a2 cos(t2 - t1)).
///
/// Evaluated as (a1 - a2)^2 + 4 a1 a2 cos^2((t2 - t1) / 2), the same value
/// without cancellation when the two waves nearly annihilate.
template <typename T>
T superpose_amplitude(T a1, T a2, T t1, T t2) {
    detail::check_amplitudes(a1, a2);
    const T d = a1 - a2;
    const T c = std::cos((t2 - t1) / T{2});
    return std::sqrt(d * d + T{4} * a1 * a2 * c * c);
}

/// Phase of a1*e^{i t1} + a2*e^{i t2}:
/// t1 + atan2(a2 sin(t2 - t1), a1 + a2 cos(t2 - t1)), canonicalised.
template <typename T>
T superpose_phase(T a1, T a2, T t1, T t2) {
    detail::check_amplitudes(a1, a2);
    if (a1 == T{0} && a2 == T{0}) throw UndefinedPhaseError("phase of two zero-amplitude waves is undefined");
    const T d = t2 - t1;
    return canonical_phase(t1 + std::atan2(a2 * std::sin(d), a1 + a2 * std::cos(d)));
}

template <typename T>
Phasor<T> superpose(const Phasor<T>& w1, const Phasor<T>& w2) {
    const T amp = superpose_amplitude(w1.amplitude, w2.amplitude, w1.phase, w2.phase);
    const T ph = (w1.amplitude == T{0} && w2.amplitude == T{0})
                     ? T{0}
                     : superpose_phase(w1.amplitude, w2.amplitude, w1.phase, w2.phase);
    return Phasor<T>(amp, ph);
}

/// Reference superposition through explicit complex addition of the two
/// phasors in Cartesian form. Shares no code with the closed forms above.
/// The phase is reported as 0 when the resulting modulus is below 1e-14.
template <typename T>
Phasor<T> oracle_superpose(T a1, T a2, T t1, T t2) {
    struct Cartesian {
        T re;
        T im;
    };
    const Cartesian c1{a1 * std::cos(t1), a1 * std::sin(t1)};
    const Cartesian c2{a2 * std::cos(t2), a2 * std::sin(t2)};
    const Cartesian c{c1.re + c2.re, c1.im + c2.im};
    const T modulus = std::hypot(c.re, c.im);
    Phasor<T> out;
    out.amplitude = modulus;
    out.phase = modulus < T(1e-14) ? T{0} : canonical_phase(std::atan2(c.im, c.re));
    return out;
}

/// Elementwise two-wave superposition of grids.
template <typename T>
WaveGrid<T> superpose(const WaveGrid<T>& w1, const WaveGrid<T>& w2) {
    if (w1.amplitude.shape() != w2.amplitude.shape()) throw DimensionError("superpose: grid shapes differ");
    Tensor<T> amp(w1.amplitude.shape());
    Tensor<T> ph(w1.amplitude.shape());
    for (std::size_t i = 0; i < amp.size(); ++i) {
        const Phasor<T> p = superpose(Phasor<T>(w1.amplitude[i], w1.phase[i]), Phasor<T>(w2.amplitude[i], w2.phase[i]));
        amp[i] = p.amplitude;
        ph[i] = p.phase;
    }
    return WaveGrid<T>(std::move(amp), std::move(ph));
}

/// Euler unfolding into (real, imaginary) parts.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> unfold(const WaveGrid<T>& w) {
    Tensor<T> re(w.amplitude.shape());
    Tensor<T> im(w.amplitude.shape());
    for (std::size_t i = 0; i < re.size(); ++i) {
        re[i] = w.amplitude[i] * std::cos(w.phase[i]);
        im[i] = w.amplitude[i] * std::sin(w.phase[i]);
    }
    return {std::move(re), std::move(im)};
}

/// Differentiable Euler unfolding on the tape.
template <typename T>
std::pair<Var<T>, Var<T>> unfold(const Var<T>& amplitude, const Var<T>& phase) {
    return {mul(amplitude, cos(phase)), mul(amplitude, sin(phase))};
}

/// Folds the sign of a real amplitude into the phase: negative entries become
/// (-z, theta + pi), so that z e^{i theta} is preserved with a non-negative
/// amplitude.
template <typename T>
WaveGrid<T> absorb_sign(const Tensor<T>& z, const Tensor<T>& theta) {
    if (z.shape() != theta.shape()) throw DimensionError("absorb_sign: shapes differ");
    Tensor<T> amp(z.shape());
    Tensor<T> ph(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i] < T{0}) {
            amp[i] = -z[i];
            ph[i] = canonical_phase(theta[i] + std::numbers::pi_v<T>);
        } else {
            amp[i] = z[i];
            ph[i] = canonical_phase(theta[i]);
        }
    }
    return WaveGrid<T>(std::move(amp), std::move(ph));
}

} // namespace wavemlp
