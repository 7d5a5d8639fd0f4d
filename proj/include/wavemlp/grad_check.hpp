#pragma once

#include <wavemlp/tape.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wavemlp {

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-4;
    /// Entries checked per input tensor; 0 checks every entry. When limited,
    /// entries are sampled without replacement from a seeded generator.
    std::size_t max_entries_per_input = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t entries_checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    bool passed = false;
};

namespace detail {

/// Central-difference comparison shared by the public entry points.
/// `evaluate(with_grad, grads)` runs the function once at the current values
/// of `targets` and, when asked, fills one analytic gradient per target.
template <typename T, typename Eval>
GradCheckReport compare_gradients(Eval&& evaluate, const std::vector<Tensor<T>*>& targets, const GradCheckOptions& opt) {
    if (!(opt.step > 0.0)) throw ContractError("grad_check: step must be positive");
    std::vector<Tensor<T>> analytic;
    evaluate(true, &analytic);

    GradCheckReport report;
    std::mt19937_64 rng(opt.seed);
    for (std::size_t k = 0; k < targets.size(); ++k) {
        Tensor<T>& x = *targets[k];
        std::vector<std::size_t> idx(x.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (opt.max_entries_per_input != 0 && idx.size() > opt.max_entries_per_input) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(opt.max_entries_per_input);
            std::sort(idx.begin(), idx.end());
        }
        std::vector<double> numeric(idx.size());
        for (std::size_t e = 0; e < idx.size(); ++e) {
            const std::size_t i = idx[e];
            const T orig = x[i];
            x[i] = static_cast<T>(orig + opt.step);
            const double fp = evaluate(false, nullptr);
            x[i] = static_cast<T>(orig - opt.step);
            const double fm = evaluate(false, nullptr);
            x[i] = orig;
            numeric[e] = (fp - fm) / (2.0 * opt.step);
        }
        double scale = 0.0;
        for (double v : numeric) scale = std::max(scale, std::abs(v));
        const double floor = std::max(1e-3 * scale, 1e-10);
        for (std::size_t e = 0; e < idx.size(); ++e) {
            const double a = analytic[k][idx[e]];
            const double n = numeric[e];
            const double abs_err = std::abs(a - n);
            const double rel = abs_err / std::max({std::abs(a), std::abs(n), floor});
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_input = k;
                report.worst_index = idx[e];
            }
            ++report.entries_checked;
        }
    }
    report.passed = report.max_rel_error <= opt.tol;
    return report;
}

template <typename T>
T scalar_output(const Var<T>& out) {
    if (out.value().size() != 1) {
        throw ContractError("grad_check: function output must be scalar, got shape " + to_string(out.shape()));
    }
    return out.value()[0];
}

} // namespace detail

/// Compares tape gradients of a scalar function with central differences.
///
/// `f(tape, vars)` must build the function on `tape` from `vars` (one Var per
/// input, in order) and return a scalar Var. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor) where floor is
/// 1e-3 times the largest numeric gradient magnitude of that input (and at
/// least 1e-10); entries many orders below the gradient scale are judged
/// against that scale instead of their own size.
template <typename T, typename F>
GradCheckReport grad_check(F&& f, std::vector<Tensor<T>>& inputs, const GradCheckOptions& opt = {}) {
    auto evaluate = [&](bool with_grad, std::vector<Tensor<T>>* grads) -> double {
        Tape<T> tape;
        tape.set_grad_enabled(with_grad);
        std::vector<Var<T>> vars;
        vars.reserve(inputs.size());
        for (auto& in : inputs) vars.push_back(tape.leaf(in, true));
        Var<T> out = f(tape, std::span<const Var<T>>(vars));
        const T value = detail::scalar_output(out);
        if (with_grad) {
            tape.backward(out);
            grads->clear();
            for (auto& v : vars) grads->push_back(tape.grad(v));
        }
        return value;
    };
    std::vector<Tensor<T>*> targets;
    for (auto& in : inputs) targets.push_back(&in);
    return detail::compare_gradients<T>(evaluate, targets, opt);
}

/// Variant for functions that read their parameters through `tape.leaf`
/// (model and block code): `params` are perturbed in place and their
/// analytic gradients looked up by address. A parameter the function never
/// touches has gradient zero.
template <typename T, typename F>
GradCheckReport grad_check_params(F&& f, const std::vector<Tensor<T>*>& params, const GradCheckOptions& opt = {}) {
    auto evaluate = [&](bool with_grad, std::vector<Tensor<T>>* grads) -> double {
        Tape<T> tape;
        tape.set_grad_enabled(with_grad);
        Var<T> out = f(tape);
        const T value = detail::scalar_output(out);
        if (with_grad) {
            tape.backward(out);
            grads->clear();
            for (auto* p : params) {
                const Tensor<T>* g = tape.grad_of(*p);
                grads->push_back(g ? *g : zeros_like(*p));
            }
        }
        return value;
    };
    return detail::compare_gradients<T>(evaluate, params, opt);
}

/// Single-input convenience overload: f(tape, x) -> scalar Var.
template <typename T, typename F>
GradCheckReport grad_check(F&& f, const Tensor<T>& x, double step, double tol) {
    std::vector<Tensor<T>> inputs{x};
    GradCheckOptions opt;
    opt.step = step;
    opt.tol = tol;
    return grad_check<T>([&](Tape<T>& tape, std::span<const Var<T>> v) { return f(tape, v[0]); }, inputs, opt);
}

} // namespace wavemlp
