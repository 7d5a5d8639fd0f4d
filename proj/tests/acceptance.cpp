// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <wavemlp/wavemlp.hpp>

#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace wavemlp;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace tol {
constexpr double kSuperposeAbs = 1e-10;
constexpr double kSuperposeSeconds = 5.0;
constexpr double kClassicalAbs = 1e-12;
constexpr double kGradRel = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 120.0;
constexpr double kCostRel = 0.10;
constexpr double kTrainAcc = 0.95;
constexpr std::size_t kTrainMaxSteps = 2000;
constexpr double kTrainSeconds = 600.0;
constexpr double kDiagonalAbs = 1e-12;
} // namespace tol

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("criterion %d %-26s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 ------------------------------------------------------------------------

void superposition_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> a(0.0, 10.0), t(-4 * pi, 4 * pi);
    double amp_err = 0, phase_err = 0;
    int skipped = 0;
    for (int i = 0; i < 100000; ++i) {
        const double a1 = a(rng), a2 = a(rng), t1 = t(rng), t2 = t(rng);
        const std::complex<double> z = std::polar(a1, t1) + std::polar(a2, t2);
        amp_err = std::max(amp_err, std::abs(superpose_amplitude(a1, a2, t1, t2) - std::abs(z)));
        if (std::abs(z) < 1e-12) {
            ++skipped;
            continue;
        }
        phase_err = std::max(phase_err, std::abs(std::remainder(superpose_phase(a1, a2, t1, t2) - std::arg(z), 2 * pi)));
    }
    const double secs = seconds_since(t0);
    const bool ok = amp_err <= tol::kSuperposeAbs && phase_err <= tol::kSuperposeAbs && secs < tol::kSuperposeSeconds;
    report(1, "superposition_oracle", ok,
           "amp_err=" + fmt("%.2e", amp_err) + " phase_err=" + fmt("%.2e", phase_err) +
               " undefined_phase_skipped=" + std::to_string(skipped) + " time=" + fmt("%.3fs", secs));
}

// 2 ------------------------------------------------------------------------

// Windowed token-FC written as loops over signed amplitudes.
Tensor<double> naive_token_fc(const Tensor<double>& x, const Tensor<double>& w, MixAxis axis) {
    const auto& s = x.shape();
    const long half = static_cast<long>(w.shape()[0] / 2);
    Tensor<double> out(s);
    for (std::size_t b = 0; b < s[0]; ++b)
        for (std::size_t i = 0; i < s[1]; ++i)
            for (std::size_t j = 0; j < s[2]; ++j)
                for (std::size_t c = 0; c < s[3]; ++c) {
                    double acc = 0;
                    for (long r = -half; r <= half; ++r) {
                        long ii = static_cast<long>(i), jj = static_cast<long>(j);
                        (axis == MixAxis::Height ? ii : jj) += r;
                        if (ii < 0 || jj < 0 || ii >= static_cast<long>(s[1]) || jj >= static_cast<long>(s[2])) continue;
                        acc += w.at({static_cast<std::size_t>(r + half), c}) *
                               x.at({b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), c});
                    }
                    out.at({b, i, j, c}) = acc;
                }
    return out;
}

void classical_limit() {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<std::size_t> extent(1, 9), chans(1, 4), win(0, 3);
    std::bernoulli_distribution coin(0.5);
    double worst = 0;
    for (int cfg = 0; cfg < 100; ++cfg) {
        const std::size_t h = extent(rng), w = extent(rng), d = chans(rng), k = 2 * win(rng) + 1;
        const MixAxis axis = coin(rng) ? MixAxis::Height : MixAxis::Width;
        const Tensor<double> amp = uniform<double>({2, h, w, d}, 0.0, 3.0, rng);
        Tensor<double> theta(amp.shape()), signed_amp(amp.shape());
        for (std::size_t i = 0; i < amp.size(); ++i) {
            const bool flip = coin(rng);
            theta[i] = flip ? pi : 0.0;
            signed_amp[i] = flip ? -amp[i] : amp[i];
        }
        const Tensor<double> wr = normal<double>({k, d}, rng), wi({k, d});
        Tape<double> tape;
        tape.set_grad_enabled(false);
        const Tensor<double> got =
            aggregate_tokens(tape.leaf(amp), tape.leaf(theta), tape.leaf(wr), tape.leaf(wi), axis).value();
        worst = std::max(worst, max_abs_diff(got, naive_token_fc(signed_amp, wr, axis)));
    }
    report(2, "classical_limit", worst <= tol::kClassicalAbs, "configs=100 max_abs_err=" + fmt("%.2e", worst));
}

// 3 ------------------------------------------------------------------------

// A stem, exactly two Wave blocks, final norm, mean pool and a linear head.
GradCheckReport two_block_model_check(const GradCheckOptions& opt) {
    std::mt19937_64 rng(5);
    StemParams<double> stem = make_stem<double>(2, 3, 6, rng);
    BlockParams<double> b1 = make_block<double>(6, 2, 3, 3, PhaseMode::ChannelFC, rng);
    BlockParams<double> b2 = make_block<double>(6, 2, 3, 3, PhaseMode::ChannelFC, rng);
    Tensor<double> nscale = uniform<double>({6}, 0.5, 1.5, rng), shift = normal<double>({6}, rng);
    Tensor<double> head = normal<double>({4, 6}, rng);
    Tensor<double> img = normal<double>({2, 6, 6, 3}, rng);
    const std::vector<int> labels{1, 2};
    std::vector<Tensor<double>*> params{&img, &stem.weight, &nscale, &shift, &head};
    b1.for_each_param([&](const char*, Tensor<double>& t) { params.push_back(&t); });
    b2.for_each_param([&](const char*, Tensor<double>& t) { params.push_back(&t); });
    return grad_check_params<double>(
        [&](Tape<double>& t) {
            Var<double> x = patch_embed(t, t.leaf(img), stem);
            x = block_forward(t, block_forward(t, x, b1), b2);
            x = normalize(t, x, nscale, shift);
            const Shape& s = x.shape();
            Var<double> pooled = scale(reduce_sum(reshape(x, {s[0], s[1] * s[2], s[3]}), 1), 1.0 / double(s[1] * s[2]));
            return softmax_cross_entropy(channel_fc(pooled, t.leaf(head)), std::span<const int>(labels));
        },
        params, opt);
}

void gradient_suite() {
    const auto t0 = Clock::now();
    GradCheckOptions opt;
    opt.step = tol::kGradStep;
    opt.tol = tol::kGradRel;
    std::vector<CheckResult> results = grad_check_suite(preset("tiny"), 0, opt);
    ArchConfig tstar_tiny = preset("tiny");
    tstar_tiny.phase_mode = PhaseMode::DepthWise;
    tstar_tiny.name = "tiny-depthwise";
    results.push_back(grad_check_suite(tstar_tiny, 1, opt).back());
    results.push_back(detail::grad_result("two_block_model_end_to_end", two_block_model_check(opt)));
    const double secs = seconds_since(t0);
    std::string failed;
    double worst = 0;
    for (const auto& r : results) {
        if (!r.pass) failed += " " + r.name;
        const auto p = r.detail.find("max_rel=");
        if (p != std::string::npos) worst = std::max(worst, std::stod(r.detail.substr(p + 8)));
    }
    const bool ok = failed.empty() && secs < tol::kGradSeconds;
    report(3, "gradient_correctness", ok,
           "checks=" + std::to_string(results.size()) + " worst_rel=" + fmt("%.2e", worst) + " time=" + fmt("%.2fs", secs) +
               (failed.empty() ? "" : " failed:" + failed));
}

// 4 ------------------------------------------------------------------------

void accounting() {
    struct Row {
        const char* name;
        double params, flops;
    };
    bool ok = true;
    std::string detail;
    for (const Row& r : {Row{"T", 17e6, 2.4e9}, Row{"S", 30e6, 4.5e9}, Row{"M", 44e6, 7.9e9}, Row{"B", 63e6, 10.2e9},
                         Row{"T*", 15e6, 2.1e9}}) {
        const ArchConfig c = preset(r.name);
        const double p = static_cast<double>(count_params(c));
        const double f = static_cast<double>(count_flops(c, 224, 224).total);
        const double ep = (p - r.params) / r.params, ef = (f - r.flops) / r.flops;
        ok = ok && std::abs(ep) <= tol::kCostRel && std::abs(ef) <= tol::kCostRel;
        detail += std::string(r.name) + "=" + fmt("%.2fM", p / 1e6) + "/" + fmt("%.2fG", f / 1e9) + " ";
    }
    report(4, "table_accounting", ok, detail);
}

// 5 ------------------------------------------------------------------------

void variable_resolution() {
    bool ok = true;
    std::string detail;
    std::mt19937_64 rng(9);
    const Tensor<float> img = uniform<float>({1, 64, 96, 3}, 0.0f, 1.0f, rng);
    for (std::string_view name : kPresetNames) {
        const ArchConfig c = preset(name);
        const auto m = build<float>(c, 0);
        bool row_ok = false;
        try {
            const Tensor<float> y = predict(m, img);
            row_ok = y.shape() == Shape{1, c.num_classes} && y.all_finite() && count_params(m) == count_params(c);
        } catch (const std::exception& e) {
            detail += std::string(name) + ":" + e.what() + " ";
        }
        ok = ok && row_ok;
        detail += std::string(name) + (row_ok ? ":ok " : ":bad ");
    }
    report(5, "variable_resolution_64x96", ok, detail);
}

// 6 ------------------------------------------------------------------------

std::optional<ModelParams<float>> toy_training() {
    const auto t0 = Clock::now();
    const RunConfig rc = load_run_config(std::string(WAVEMLP_FIXTURE_DIR) + "/pilot_interference.json");
    const bool fixture_ok = rc.expect.min_train_acc >= tol::kTrainAcc && rc.expect.max_steps <= tol::kTrainMaxSteps &&
                            rc.model.name == "tiny" && rc.task.generator == "interference";
    auto a = train<float>(rc.model, rc.task, rc.train);
    auto b = train<float>(rc.model, rc.task, rc.train);
    const double secs = seconds_since(t0);
    std::optional<std::size_t> reached;
    for (std::size_t e = 0; e < a.history.train_acc.size(); ++e)
        if (a.history.train_acc[e] >= tol::kTrainAcc) {
            reached = a.history.epoch_end_step[e];
            break;
        }
    const bool identical = a.history.loss == b.history.loss;
    const bool ok = fixture_ok && reached && *reached <= tol::kTrainMaxSteps && identical && secs < tol::kTrainSeconds;
    report(6, "toy_training", ok,
           "reached_0.95_at_step=" + (reached ? std::to_string(*reached) : std::string("never")) +
               " final_train_acc=" + fmt("%.4f", a.history.train_acc.back()) +
               " final_val_acc=" + fmt("%.4f", a.history.val_acc.back()) + " bit_identical=" + (identical ? "yes" : "no") +
               " time_two_runs=" + fmt("%.1fs", secs));
    return std::move(a.model);
}

// 7 ------------------------------------------------------------------------

void ablation_tables() {
    ArchConfig base = preset("tiny");
    base.phase_mode = PhaseMode::DepthWise;
    SynthTask task;
    task.train_size = 64;
    task.val_size = 32;
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 16;
    tc.lr = 2e-3;
    tc.precision = Precision::F32;
    const std::vector<std::vector<std::string>> expected{
        {"No phase", "Static phase", "Dynamic phase"},
        {"Baseline", "Identity", "Depth-wise", "Channel-FC"},
        {"3", "5", "7", "All"},
    };
    bool ok = true;
    std::string detail;
    for (std::size_t i = 0; i < kAblationAxes.size(); ++i) {
        const AblationTable t = ablate(kAblationAxes[i], base, task, tc, {0, 1, 2}, worker_threads_from_env());
        std::vector<std::string> got;
        for (const auto& r : t.rows) {
            got.push_back(r.label);
            for (double v : r.val_acc) ok = ok && v >= 0.0 && v <= 1.0;
        }
        const std::string csv = ablation_csv(t);
        const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
        ok = ok && got == expected[i] && lines == expected[i].size() + 1;
        detail += std::string(to_string(kAblationAxes[i])) + "=" + std::to_string(t.rows.size()) + "rows ";
    }
    report(7, "ablation_tables", ok, detail + "seeds=3");
}

// 8 ------------------------------------------------------------------------

void phase_map_export(const std::optional<ModelParams<float>>& model) {
    if (!model) {
        report(8, "phase_map_export", false, "no trained model");
        return;
    }
    SynthTask probe;
    probe.height = probe.width = 64;
    std::mt19937_64 rng(1);
    const Dataset<float> img = generate_samples<float>(probe, 1, rng);
    const fs::path dir = fs::temp_directory_path() / "wavemlp_acceptance_maps";
    fs::create_directories(dir);
    bool ok = true;
    double lo = 1, hi = -1, diag = 0;
    for (std::size_t stage : {3u, 4u})
        for (PhaseBranch br : {PhaseBranch::Height, PhaseBranch::Width}) {
            const std::size_t window = 7, c = window / 2;
            const PhaseMap pm = phase_map(*model, img.images, stage, window, br);
            for (std::size_t i = 0; i < pm.value.size(); ++i) {
                lo = std::min(lo, pm.value[i]);
                hi = std::max(hi, pm.value[i]);
            }
            for (std::size_t r = 0; r < pm.grid_h; ++r)
                for (std::size_t col = 0; col < pm.grid_w; ++col)
                    diag = std::max(diag, std::abs(pm.value[pm.index(r, col, c, c)] - 1.0));
            const std::string stem = "stage" + std::to_string(stage) + (br == PhaseBranch::Height ? "_h" : "_w");
            const GrayImage gi = phase_map_image(pm);
            write_text_file((dir / (stem + ".csv")).string(), phase_map_csv(pm));
            write_text_file((dir / (stem + ".pgm")).string(), encode_pgm(gi));
            ok = ok && parse_phase_map_csv(read_binary_file((dir / (stem + ".csv")).string())) == pm;
            ok = ok && decode_pgm(read_binary_file((dir / (stem + ".pgm")).string())) == gi;
        }
    fs::remove_all(dir);
    const bool roundtrip = ok;
    ok = ok && lo >= -1.0 && hi <= 1.0 && diag <= tol::kDiagonalAbs;
    report(8, "phase_map_export", ok,
           "min=" + fmt("%.6f", lo) + " max=" + fmt("%.6f", hi) + " diag_err=" + fmt("%.1e", diag) +
               " roundtrip=" + (roundtrip ? "yes" : "no"));
}

template <typename F>
auto guarded(int id, const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
        if constexpr (!std::is_void_v<decltype(f())>) return {};
    }
}

} // namespace

int main() {
    guarded(1, "superposition_oracle", superposition_oracle);
    guarded(2, "classical_limit", classical_limit);
    guarded(3, "gradient_correctness", gradient_suite);
    guarded(4, "table_accounting", accounting);
    guarded(5, "variable_resolution_64x96", variable_resolution);
    const auto model = guarded(6, "toy_training", toy_training);
    guarded(7, "ablation_tables", ablation_tables);
    guarded(8, "phase_map_export", [&] { phase_map_export(model); });
    std::printf("acceptance: %d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
