#pragma once

#include <wavemlp/blocks.hpp>
#include <wavemlp/config_json.hpp>
#include <wavemlp/grad_check.hpp>
#include <wavemlp/model.hpp>
#include <wavemlp/optim.hpp>
#include <wavemlp/phase_map.hpp>
#include <wavemlp/train.hpp>
#include <wavemlp/wave.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace wavemlp {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Published sizes at 224 x 224 input.
struct ReferenceCost {
    std::string_view preset;
    double params;
    double flops;
};

inline constexpr std::array<ReferenceCost, 5> kReferenceCosts{{
    {"T*", 15e6, 2.1e9},
    {"T", 17e6, 2.4e9},
    {"S", 30e6, 4.5e9},
    {"M", 44e6, 7.9e9},
    {"B", 63e6, 10.2e9},
}};

inline std::optional<ReferenceCost> reference_cost(std::string_view preset_name) {
    for (const auto& r : kReferenceCosts)
        if (r.preset == preset_name) return r;
    return std::nullopt;
}

inline constexpr double kCostTolerance = 0.10;

inline bool within_relative(double value, double reference, double tol) {
    return std::abs(value - reference) <= tol * reference;
}

namespace detail {

inline std::string fmt_err(const GradCheckReport& r) {
    std::ostringstream os;
    os << "max_rel=" << r.max_rel_error << " entries=" << r.entries_checked;
    return os.str();
}

inline std::string sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

inline CheckResult grad_result(std::string name, const GradCheckReport& r) {
    return {std::move(name), r.passed, fmt_err(r)};
}

/// sum(y * w) with a fixed random weighting, so no gradient is trivially uniform.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const Var<T>& y, const Tensor<T>& w) {
    return sum(mul(y, tape.constant(w)));
}

template <typename T>
std::vector<Tensor<T>*> block_token_params(BlockParams<T>& b) {
    std::vector<Tensor<T>*> out{&b.norm1_scale, &b.norm1_shift, &b.branch_fc};
    b.patm_h.for_each_param([&](const char*, Tensor<T>& t) { out.push_back(&t); });
    b.patm_w.for_each_param([&](const char*, Tensor<T>& t) { out.push_back(&t); });
    return out;
}

} // namespace detail

/// Gradient checks in double precision (step 1e-5, tolerance 1e-4) over the
/// primitive ops, every PATM phase mode, the token-mixing block, a two-block
/// stack and `model_cfg` end to end.
inline std::vector<CheckResult> grad_check_suite(const ArchConfig& model_cfg, std::uint64_t seed = 0,
                                                 const GradCheckOptions& opt = {}) {
    using T = double;
    std::mt19937_64 rng(seed);
    std::vector<CheckResult> out;
    auto rnd = [&](Shape s) { return normal<T>(std::move(s), rng, 0.0, 1.0); };

    {
        std::vector<Tensor<T>> in{rnd({3, 4}), rnd({4, 5})};
        const Tensor<T> w = rnd({3, 5});
        out.push_back(detail::grad_result(
            "matmul", grad_check<T>([&](Tape<T>& t, std::span<const Var<T>> v) { return detail::weighted_sum(t, matmul(v[0], v[1]), w); },
                                    in, opt)));
    }
    {
        std::vector<Tensor<T>> in{rnd({2, 3, 5}), uniform<T>({5}, 0.5, 1.5, rng), rnd({5})};
        const Tensor<T> w = rnd({2, 3, 5});
        out.push_back(detail::grad_result(
            "normalize",
            grad_check<T>([&](Tape<T>& t, std::span<const Var<T>> v) { return detail::weighted_sum(t, normalize(v[0], v[1], v[2]), w); },
                          in, opt)));
    }
    {
        BlockParams<T> b = make_block<T>(4, 2, 3, 3, PhaseMode::ChannelFC, rng);
        b.norm2_scale = uniform<T>({4}, 0.5, 1.5, rng);
        b.norm2_shift = rnd({4});
        Tensor<T> x = rnd({1, 3, 3, 4});
        const Tensor<T> w = rnd({1, 3, 3, 4});
        std::vector<Tensor<T>*> params{&x, &b.norm2_scale, &b.norm2_shift, &b.mlp_fc1, &b.mlp_fc2};
        out.push_back(detail::grad_result(
            "channel_mlp",
            grad_check_params<T>([&](Tape<T>& t) { return detail::weighted_sum(t, channel_mlp_forward(t, t.leaf(x), b), w); },
                                 params, opt)));
    }
    for (PhaseMode mode : {PhaseMode::None, PhaseMode::Static, PhaseMode::Identity, PhaseMode::ChannelFC,
                           PhaseMode::DepthWise}) {
        const std::size_t d = 3;
        const std::pair<std::size_t, std::size_t> hw{5, 4};
        PatmParams<T> ph = make_patm<T>(d, MixAxis::Height, 3, mode, rng, hw);
        PatmParams<T> pw = make_patm<T>(d, MixAxis::Width, 5, mode, rng, hw);
        Tensor<T> x = rnd({2, 5, 4, d});
        const Tensor<T> w = rnd({2, 5, 4, d});
        std::vector<Tensor<T>*> params{&x};
        ph.for_each_param([&](const char*, Tensor<T>& t) { params.push_back(&t); });
        pw.for_each_param([&](const char*, Tensor<T>& t) { params.push_back(&t); });
        out.push_back(detail::grad_result(
            "patm_" + std::string(to_string(mode)), grad_check_params<T>(
                                                        [&](Tape<T>& t) {
                                                            Var<T> xv = t.leaf(x);
                                                            return detail::weighted_sum(
                                                                t, add(patm_forward(t, xv, ph), patm_forward(t, xv, pw)), w);
                                                        },
                                                        params, opt)));
    }
    {
        std::vector<Tensor<T>> in{rnd({2, 4, 5, 3}), uniform<T>({2, 4, 5, 3}, -std::numbers::pi, std::numbers::pi, rng),
                                  rnd({5, 3}), rnd({5, 3})};
        const Tensor<T> w = rnd({2, 4, 5, 3});
        for (MixAxis axis : {MixAxis::Height, MixAxis::Width}) {
            out.push_back(detail::grad_result(
                std::string("aggregate_tokens_") + (axis == MixAxis::Height ? "h" : "w"),
                grad_check<T>([&](Tape<T>& t, std::span<const Var<T>> v) {
                    return detail::weighted_sum(t, aggregate_tokens(v[0], v[1], v[2], v[3], axis), w);
                }, in, opt)));
        }
    }
    {
        BlockParams<T> b = make_block<T>(4, 2, 3, 5, PhaseMode::ChannelFC, rng);
        b.norm1_scale = uniform<T>({4}, 0.5, 1.5, rng);
        b.norm1_shift = rnd({4});
        Tensor<T> x = rnd({1, 4, 4, 4});
        const Tensor<T> w = rnd({1, 4, 4, 4});
        auto params = detail::block_token_params(b);
        params.push_back(&x);
        out.push_back(detail::grad_result(
            "token_mixing_block",
            grad_check_params<T>([&](Tape<T>& t) { return detail::weighted_sum(t, token_mixing_forward(t, t.leaf(x), b), w); },
                                 params, opt)));
    }
    {
        BlockParams<T> b1 = make_block<T>(4, 2, 3, 3, PhaseMode::ChannelFC, rng);
        BlockParams<T> b2 = make_block<T>(4, 2, 3, 3, PhaseMode::DepthWise, rng);
        Tensor<T> x = rnd({1, 3, 4, 4});
        const Tensor<T> w = rnd({1, 3, 4, 4});
        std::vector<Tensor<T>*> params{&x};
        b1.for_each_param([&](const char*, Tensor<T>& t) { params.push_back(&t); });
        b2.for_each_param([&](const char*, Tensor<T>& t) { params.push_back(&t); });
        out.push_back(detail::grad_result("two_block_stack", grad_check_params<T>(
                                                                 [&](Tape<T>& t) {
                                                                     Var<T> y = block_forward(t, t.leaf(x), b1);
                                                                     return detail::weighted_sum(t, block_forward(t, y, b2), w);
                                                                 },
                                                                 params, opt)));
    }
    {
        ModelParams<T> m = build<T>(model_cfg, seed);
        const std::size_t h = model_cfg.image_size ? model_cfg.image_size->first : 8;
        const std::size_t wd = model_cfg.image_size ? model_cfg.image_size->second : 8;
        Tensor<T> images = rnd({2, h, wd, model_cfg.in_channels});
        std::vector<int> labels{0, static_cast<int>(model_cfg.num_classes - 1)};
        std::vector<Tensor<T>*> params{&images};
        m.for_each_param([&](const std::string&, Tensor<T>& t) { params.push_back(&t); });
        GradCheckOptions sampled = opt;
        if (sampled.max_entries_per_input == 0) sampled.max_entries_per_input = 24;
        out.push_back(detail::grad_result(
            "model_end_to_end[" + model_cfg.name + "]",
            grad_check_params<T>([&](Tape<T>& t) {
                return softmax_cross_entropy(forward(t, m, t.leaf(images)), std::span<const int>(labels));
            }, params, sampled)));
    }
    return out;
}

/// The whole invariant suite: wave algebra against a Cartesian oracle,
/// classical limit, gradients, accounting, variable resolution, optimiser
/// and schedule arithmetic, determinism and phase-map properties.
inline std::vector<CheckResult> selftest_suite(std::uint64_t seed = 0) {
    std::vector<CheckResult> out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.0, 3.0), ph(-std::numbers::pi, std::numbers::pi);

    {
        double worst = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const double a1 = amp(rng), a2 = amp(rng), t1 = ph(rng), t2 = ph(rng);
            const auto o = oracle_superpose(a1, a2, t1, t2);
            const double ea = std::abs(superpose_amplitude(a1, a2, t1, t2) - o.amplitude);
            const double ep = std::abs(canonical_phase(superpose_phase(a1, a2, t1, t2) - o.phase));
            worst = std::max({worst, ea, ep});
        }
        out.push_back({"superposition_oracle", worst <= 1e-10, "max_abs_err=" + detail::sci(worst)});
    }
    {
        double worst = 0.0;
        std::uniform_int_distribution<int> bit(0, 1);
        for (int c = 0; c < 20; ++c) {
            Tensor<double> a = uniform<double>({1, 5, 6, 3}, 0.0, 2.0, rng);
            Tensor<double> th(a.shape());
            for (auto& v : th.data()) v = bit(rng) ? std::numbers::pi : 0.0;
            Tensor<double> wr = normal<double>({3, 3}, rng, 0.0, 1.0);
            Tape<double> tape;
            tape.set_grad_enabled(false);
            const MixAxis axis = c % 2 ? MixAxis::Width : MixAxis::Height;
            Var<double> agg = aggregate_tokens(tape.leaf(a), tape.leaf(th), tape.leaf(wr),
                                               tape.constant(Tensor<double>({3, 3})), axis);
            Var<double> signed_amp = mul(tape.leaf(a), cos(tape.leaf(th)));
            Var<double> plain = windowed_mix(signed_amp, tape.leaf(wr), static_cast<std::size_t>(axis));
            worst = std::max(worst, static_cast<double>(max_abs_diff(agg.value(), plain.value())));
        }
        out.push_back({"classical_limit", worst <= 1e-12, "max_abs_err=" + detail::sci(worst)});
    }
    for (auto& r : grad_check_suite(preset("tiny"), seed)) out.push_back(std::move(r));
    for (const auto& ref : kReferenceCosts) {
        const ArchConfig cfg = preset(ref.preset);
        const double p = static_cast<double>(count_params(cfg));
        const double f = static_cast<double>(count_flops(cfg, 224, 224).total);
        const bool ok = within_relative(p, ref.params, kCostTolerance) && within_relative(f, ref.flops, kCostTolerance);
        out.push_back({"accounting[" + std::string(ref.preset) + "]", ok,
                       "params=" + std::to_string(static_cast<std::uint64_t>(p)) +
                           " flops=" + std::to_string(static_cast<std::uint64_t>(f))});
    }
    {
        const ArchConfig cfg = preset("tiny");
        ModelParams<double> m = build<double>(cfg, seed);
        Tensor<double> img = normal<double>({2, 64, 96, 3}, rng, 0.0, 1.0);
        const Tensor<double> logits = predict(m, img);
        const bool ok = logits.shape() == Shape{2, cfg.num_classes} && logits.all_finite() &&
                        count_params(m) == count_params(cfg);
        out.push_back({"variable_resolution[tiny]", ok, "logits=" + to_string(logits.shape())});
    }
    {
        const double lr0 = 1e-3;
        const bool ok = cosine_lr(0, 100, lr0) == lr0 && std::abs(cosine_lr(100, 100, lr0)) <= 1e-18 &&
                        std::abs(cosine_lr(50, 100, lr0) - lr0 / 2) <= 1e-18;
        out.push_back({"cosine_schedule", ok, ""});
    }
    {
        Tensor<double> p = Tensor<double>::scalar(1.0), g = Tensor<double>::scalar(0.5);
        AdamState<double> st;
        AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.0;
        adamw_step(p, g, st, 1, cfg);
        // One step from zero moments: m_hat = g, v_hat = g^2.
        const double expect = 1.0 - 0.1 * 0.5 / (0.5 + cfg.eps);
        out.push_back({"adamw_first_step", std::abs(p[0] - expect) <= 1e-15, "param=" + detail::sci(p[0])});
    }
    {
        SynthTask task;
        task.train_size = 32;
        task.val_size = 16;
        TrainConfig tc;
        tc.epochs = 2;
        tc.batch_size = 8;
        tc.seed = seed;
        const auto a = train<double>(preset("tiny"), task, tc);
        const auto b = train<double>(preset("tiny"), task, tc);
        bool same = a.history.loss == b.history.loss;
        out.push_back({"training_determinism", same, "steps=" + std::to_string(a.history.steps())});
        const bool sane = std::isfinite(a.history.loss[1]) && a.history.loss[1] <= a.history.loss[0] + 1.0;
        out.push_back({"first_step_sanity", sane, ""});

        tc.lr = 0.0;
        const auto frozen = train<double>(preset("tiny"), task, tc);
        const ModelParams<double> init = build<double>(preset("tiny"), tc.seed);
        bool unchanged = true;
        std::vector<const Tensor<double>*> before;
        init.for_each_param([&](const std::string&, const Tensor<double>& t) { before.push_back(&t); });
        std::size_t k = 0;
        frozen.model.for_each_param([&](const std::string&, const Tensor<double>& t) { unchanged = unchanged && t == *before[k++]; });
        out.push_back({"zero_lr_frozen", unchanged, ""});
    }
    {
        const ModelParams<double> m = build<double>(preset("tiny"), seed);
        SynthTask task;
        task.height = task.width = 64;
        std::mt19937_64 drng(seed);
        const Dataset<double> ds = generate_samples<double>(task, 1, drng);
        bool ok = true;
        std::string detail;
        for (std::size_t stage : {3u, 4u}) {
            const PhaseMap pm = phase_map(m, ds.images, stage, 7);
            for (std::size_t i = 0; i < pm.value.size(); ++i)
                ok = ok && pm.value[i] >= -1.0 && pm.value[i] <= 1.0;
            for (std::size_t r = 0; r < pm.grid_h; ++r)
                for (std::size_t c = 0; c < pm.grid_w; ++c) ok = ok && std::abs(pm.value[pm.index(r, c, 3, 3)] - 1.0) <= 1e-12;
            ok = ok && parse_phase_map_csv(phase_map_csv(pm)) == pm;
            ok = ok && decode_pgm(encode_pgm(phase_map_image(pm))) == phase_map_image(pm);
            detail += "stage" + std::to_string(stage) + "=" + std::to_string(pm.grid_h) + "x" + std::to_string(pm.grid_w) + " ";
        }
        out.push_back({"phase_map_properties", ok, detail});
    }
    {
        const ArchConfig cfg = preset("S");
        out.push_back({"config_json_roundtrip", arch_config_from_json(arch_config_to_json(cfg)) == cfg, ""});
    }
    return out;
}

} // namespace wavemlp
