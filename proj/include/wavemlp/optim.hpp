#pragma once

#include <wavemlp/tensor.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace wavemlp {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
};

/// One AdamW update of `param` at step t (1-based). Weight decay is decoupled:
/// param <- param * (1 - lr * wd), then the bias-corrected Adam step.
template <typename T>
void adamw_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, std::size_t t, const AdamWConfig& cfg) {
    if (t == 0) throw ContractError("adamw_step: step index is 1-based");
    if (param.shape() != grad.shape()) {
        throw DimensionError("adamw_step: param " + to_string(param.shape()) + " vs grad " + to_string(grad.shape()));
    }
    if (state.m.shape() != param.shape()) state.m = Tensor<T>(param.shape());
    if (state.v.shape() != param.shape()) state.v = Tensor<T>(param.shape());
    if (!grad.all_finite()) throw NumericError("adamw_step: non-finite gradient at step " + std::to_string(t));

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T decay = static_cast<T>(1.0 - cfg.lr * cfg.weight_decay);
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
        state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
        const double m_hat = static_cast<double>(state.m[i]) / bc1;
        const double v_hat = static_cast<double>(state.v[i]) / bc2;
        param[i] = param[i] * decay - static_cast<T>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

/// lr0 * (1 + cos(pi * t / total)) / 2 for 0 <= t <= total.
inline double cosine_lr(double t, double total, double lr0) {
    if (!(total > 0)) throw ConfigError("cosine schedule needs a positive horizon");
    if (t < 0 || t > total) throw ConfigError("cosine schedule step outside [0, total]");
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
}

} // namespace wavemlp
