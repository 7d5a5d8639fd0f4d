// Sweeps the phase difference between two waves and prints the superposed
// amplitude and phase next to plain complex addition.

#include <wavemlp/wave.hpp>

#include <complex>
#include <cstdio>
#include <numbers>

int main() {
    using namespace wavemlp;
    const double a1 = 1.0, a2 = 0.6, t1 = 0.3;
    std::printf("%8s %12s %12s %12s %12s\n", "dtheta", "amplitude", "phase", "complex_amp", "complex_ph");
    for (int k = 0; k <= 12; ++k) {
        const double d = k * std::numbers::pi / 6;
        const Phasor<double> w = superpose(Phasor<double>(a1, t1), Phasor<double>(a2, t1 + d));
        const std::complex<double> z = std::polar(a1, t1) + std::polar(a2, t1 + d);
        std::printf("%8.4f %12.8f %12.8f %12.8f %12.8f\n", d, w.amplitude, w.phase, std::abs(z), std::arg(z));
    }

    // Classical limit: phases 0 or pi only flip signs.
    const auto grid = absorb_sign(Tensor<double>({4}, {0.5, -1.5, 2.0, -0.25}), Tensor<double>({4}));
    std::printf("\nsigned -> (amplitude, phase)\n");
    for (std::size_t i = 0; i < 4; ++i) std::printf("  (%5.2f, %8.5f)\n", grid.amplitude[i], grid.phase[i]);
    return 0;
}
