#include <wavemlp/wavemlp.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace wavemlp;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

template <typename V>
void kv(const std::string& key, const V& value) {
    std::ostringstream os;
    os.precision(12);
    os << key << '=' << value;
    std::cout << os.str() << '\n';
}

std::string pass_fail(bool ok) { return ok ? "PASS" : "FAIL"; }

std::string fmt_g(double v, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

void print_checks(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        std::cout << "check." << r.name << '=' << pass_fail(r.pass);
        if (!r.detail.empty()) std::cout << ' ' << r.detail;
        std::cout << '\n';
    }
}

int summarize(const std::vector<CheckResult>& results) {
    const auto passed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
    kv("passed", std::to_string(passed) + "/" + std::to_string(results.size()));
    kv("status", pass_fail(static_cast<std::size_t>(passed) == results.size()));
    return static_cast<std::size_t>(passed) == results.size() ? 0 : kExitFail;
}

// Shared run options for train / ablate / phase-map: the pilot defaults,
// then the --config file, then individual flags.
struct RunFlags {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<double> lr;
    std::string precision;

    void add(CLI::App* cmd) {
        cmd->add_option("--config", config, "Run config JSON (model/task/train/expect sections)")->check(CLI::ExistingFile);
        cmd->add_option("--preset", preset, "Architecture preset (T*, T, S, M, B, tiny)");
        cmd->add_option("--seed", seed, "Model and data-order seed (default 0)");
        cmd->add_option("--epochs", epochs, "Training epochs");
        cmd->add_option("--lr", lr, "Base learning rate");
        cmd->add_option("--precision", precision, "f32 or f64");
    }

    RunConfig resolve() const {
        RunConfig rc = pilot_run_config();
        if (!config.empty()) rc = load_run_config(config, rc);
        if (!preset.empty()) {
            ArchConfig a = wavemlp::preset(preset);
            a.num_classes = rc.task.num_classes;
            a.in_channels = rc.task.channels;
            rc.model = a;
        }
        if (seed) rc.train.seed = *seed;
        if (epochs) rc.train.epochs = *epochs;
        if (lr) rc.train.lr = *lr;
        if (!precision.empty()) rc.train.precision = parse_precision(precision);
        rc.train.validate();
        return rc;
    }
};

void print_run(const RunConfig& rc) {
    kv("seed", rc.train.seed);
    kv("model", rc.model.name);
    kv("phase_mode", to_string(rc.model.phase_mode));
    kv("task", rc.task.generator + " " + std::to_string(rc.task.height) + "x" + std::to_string(rc.task.width) + "x" +
                   std::to_string(rc.task.channels));
    kv("train_size", rc.task.train_size);
    kv("epochs", rc.train.epochs);
    kv("batch_size", rc.train.batch_size);
    kv("lr", rc.train.lr);
    kv("precision", rc.train.precision == Precision::F32 ? "f32" : "f64");
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

// ---------------------------------------------------------------- superpose

int cmd_superpose(double a1, double a2, double t1, double t2, std::uint64_t seed) {
    kv("seed", seed);
    kv("a1", a1);
    kv("a2", a2);
    kv("t1", t1);
    kv("t2", t2);
    const double amp = superpose_amplitude(a1, a2, t1, t2);
    const Phasor<double> oracle = oracle_superpose(a1, a2, t1, t2);
    const double amp_err = std::abs(amp - oracle.amplitude);
    kv("amplitude", fmt_g(amp, 17));
    kv("oracle_amplitude", fmt_g(oracle.amplitude, 17));
    kv("amplitude_err", fmt_g(amp_err, 3));
    bool ok = amp_err <= 1e-10;
    try {
        const double phase = canonical_phase(superpose_phase(a1, a2, t1, t2));
        const double phase_err = std::abs(canonical_phase(phase - oracle.phase));
        kv("phase", fmt_g(phase, 17));
        kv("oracle_phase", fmt_g(oracle.phase, 17));
        kv("phase_err", fmt_g(phase_err, 3));
        ok = ok && phase_err <= 1e-10;
    } catch (const UndefinedPhaseError&) {
        kv("phase", "undefined");
        kv("oracle_phase", "undefined");
    }
    kv("status", pass_fail(ok));
    return ok ? 0 : kExitFail;
}

// -------------------------------------------------------------------- count

std::string short_count(double v, double unit, const char* suffix) { return fmt_g(v / unit, 3) + suffix; }

int cmd_count(const std::string& preset_name, const std::string& config, std::size_t res, std::uint64_t seed) {
    kv("seed", seed);
    ArchConfig cfg = config.empty() ? preset(preset_name) : load_arch_config(config);
    kv("model", cfg.name);
    kv("res", res);
    const std::size_t params = count_params(cfg);
    const FlopReport fl = count_flops(cfg, res, res);
    kv("params", params);
    kv("flops", fl.total);
    for (std::size_t s = 0; s < 4; ++s) kv("flops_stage" + std::to_string(s + 1), fl.stem[s] + fl.blocks[s]);
    kv("flops_head", fl.head);
    const auto ref = config.empty() ? reference_cost(preset_name) : std::nullopt;
    if (!ref) {
        kv("reference", "none");
        return 0;
    }
    const bool p_ok = within_relative(static_cast<double>(params), ref->params, kCostTolerance);
    kv("reference_params", ref->params);
    kv("params_rel_err", fmt_g((static_cast<double>(params) - ref->params) / ref->params, 4));
    std::string summary = "params " + short_count(ref->params, 1e6, "M") + "±10%: " + pass_fail(p_ok);
    bool ok = p_ok;
    if (res == 224) {
        const bool f_ok = within_relative(static_cast<double>(fl.total), ref->flops, kCostTolerance);
        kv("reference_flops", ref->flops);
        kv("flops_rel_err", fmt_g((static_cast<double>(fl.total) - ref->flops) / ref->flops, 4));
        summary += ", flops " + short_count(ref->flops, 1e9, "G") + "±10%: " + pass_fail(f_ok);
        ok = ok && f_ok;
    } else {
        summary += ", flops: reference only at res 224";
    }
    kv("summary", summary);
    return ok ? 0 : kExitFail;
}

// -------------------------------------------------------------- check-grads

int cmd_check_grads(const std::string& config, const std::string& preset_name, std::uint64_t seed,
                    std::size_t max_entries) {
    kv("seed", seed);
    ArchConfig cfg = preset(preset_name.empty() ? "tiny" : preset_name);
    if (!config.empty()) {
        const nlohmann::json j = read_json_file(config);
        cfg = j.contains("model") ? run_config_from_json(j).model : arch_config_from_json(j);
    }
    kv("model", cfg.name);
    GradCheckOptions opt;
    opt.max_entries_per_input = max_entries;
    kv("step", opt.step);
    kv("tol", opt.tol);
    const auto results = grad_check_suite(cfg, seed, opt);
    print_checks(results);
    return summarize(results);
}

// -------------------------------------------------------------------- train

template <typename T>
int run_train(const RunConfig& rc, const std::string& out_dir, bool check) {
    std::size_t last_epoch_step = 0;
    auto on_epoch = [&](std::size_t epoch, const History& h) {
        const std::size_t end = h.epoch_end_step[epoch];
        double loss = 0;
        for (std::size_t s = last_epoch_step; s < end; ++s) loss += h.loss[s];
        loss /= static_cast<double>(end - last_epoch_step);
        last_epoch_step = end;
        std::cout << "epoch=" << epoch << " step=" << end << " loss=" << fmt_g(loss, 6)
                  << " train_acc=" << fmt_g(h.train_acc[epoch], 6) << " val_acc=" << fmt_g(h.val_acc[epoch], 6) << '\n';
    };
    const TrainResult<T> r = train<T>(rc.model, rc.task, rc.train, on_epoch);
    const History& h = r.history;
    kv("steps", h.steps());
    kv("final_loss", fmt_g(h.loss.back(), 10));
    kv("final_train_acc", fmt_g(h.train_acc.back(), 6));
    kv("final_val_acc", fmt_g(h.val_acc.back(), 6));

    std::optional<std::size_t> reached;
    for (std::size_t e = 0; e < h.train_acc.size(); ++e) {
        if (h.train_acc[e] >= rc.expect.min_train_acc) {
            reached = h.epoch_end_step[e];
            break;
        }
    }
    kv("target_train_acc", rc.expect.min_train_acc);
    kv("target_max_steps", rc.expect.max_steps);
    kv("reached_at_step", reached ? std::to_string(*reached) : std::string("never"));
    const bool ok = reached && *reached <= rc.expect.max_steps;
    kv("target", pass_fail(ok));

    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        write_text_file(join(out_dir, "history_steps.csv"), history_steps_csv(h));
        write_text_file(join(out_dir, "history_epochs.csv"), history_epochs_csv(h));
        write_text_file(join(out_dir, "run.json"), run_config_to_json(rc).dump(2) + "\n");
        save_checkpoint(r.model, join(out_dir, "model.bin"));
        kv("out", out_dir);
    }
    return check && !ok ? kExitFail : 0;
}

int cmd_train(const RunFlags& flags, const std::string& out_dir, bool check) {
    const RunConfig rc = flags.resolve();
    print_run(rc);
    return rc.train.precision == Precision::F32 ? run_train<float>(rc, out_dir, check)
                                                : run_train<double>(rc, out_dir, check);
}

// ------------------------------------------------------------------- ablate

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        try {
            out.push_back(std::stoull(item, &used));
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty()) throw ConfigError("seed list must be comma-separated integers: '" + s + "'");
    }
    if (out.empty()) throw ConfigError("seed list is empty");
    return out;
}

int cmd_ablate(const RunFlags& flags, const std::string& axis_name, const std::string& seeds_arg,
               const std::string& out_dir) {
    RunConfig rc = flags.resolve();
    // The reference ablations vary the depth-wise estimator model; keep that
    // as the default dynamic mode unless a model was chosen explicitly.
    if (flags.config.empty() && flags.preset.empty()) rc.model.phase_mode = PhaseMode::DepthWise;
    print_run(rc);
    const auto seeds = parse_seeds(seeds_arg);
    kv("seeds", seeds_arg);
    const std::size_t threads = worker_threads_from_env();
    kv("threads", threads);
    std::vector<AblationAxis> axes;
    if (axis_name == "all") {
        axes.assign(kAblationAxes.begin(), kAblationAxes.end());
    } else {
        axes.push_back(parse_ablation_axis(axis_name));
    }
    if (!out_dir.empty()) ensure_dir(out_dir);
    for (AblationAxis axis : axes) {
        const AblationTable t = ablate(axis, rc.model, rc.task, rc.train, seeds, threads);
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            const auto& r = t.rows[i];
            std::cout << "table=" << to_string(axis) << " row=" << i << " setting=" << r.setting << " label=\"" << r.label
                      << "\" params=" << r.params << " flops=" << r.flops << " val_acc_mean=" << fmt_g(r.mean(), 6)
                      << " val_acc_sd=" << fmt_g(r.sd(), 6) << '\n';
        }
        if (!out_dir.empty()) {
            const std::string path = join(out_dir, "ablation_" + std::string(to_string(axis)) + ".csv");
            write_text_file(path, ablation_csv(t));
            kv("csv", path);
        }
    }
    return 0;
}

// ---------------------------------------------------------------- phase-map

template <typename T>
int run_phase_map(const RunConfig& rc, const std::string& checkpoint, std::size_t stage, std::size_t window,
                  const std::string& branch_name, std::size_t res, const std::string& out_dir) {
    ModelParams<T> model;
    if (!checkpoint.empty()) {
        model = load_checkpoint<T>(checkpoint);
        kv("checkpoint", checkpoint);
    } else {
        const TrainResult<T> r = train<T>(rc.model, rc.task, rc.train);
        kv("trained_steps", r.history.steps());
        kv("final_train_acc", fmt_g(r.history.train_acc.back(), 6));
        model = r.model;
    }
    SynthTask probe = rc.task;
    probe.height = probe.width = res;
    std::mt19937_64 rng(rc.task.seed + 1);
    const Dataset<T> image = generate_samples<T>(probe, 1, rng);
    const PhaseBranch branch = parse_phase_branch(branch_name);
    const PhaseMap pm = phase_map(model, image.images, stage, window, branch);

    double lo = 1.0, hi = -1.0, diag_err = 0.0;
    for (std::size_t i = 0; i < pm.value.size(); ++i) {
        if (!pm.valid[i]) continue;
        lo = std::min(lo, pm.value[i]);
        hi = std::max(hi, pm.value[i]);
    }
    const std::size_t c = window / 2;
    for (std::size_t r = 0; r < pm.grid_h; ++r)
        for (std::size_t col = 0; col < pm.grid_w; ++col)
            diag_err = std::max(diag_err, std::abs(pm.value[pm.index(r, col, c, c)] - 1.0));
    kv("stage", stage);
    kv("branch", branch_name);
    kv("window", window);
    kv("res", res);
    kv("grid", std::to_string(pm.grid_h) + "x" + std::to_string(pm.grid_w));
    kv("value_min", fmt_g(lo, 10));
    kv("value_max", fmt_g(hi, 10));
    kv("diagonal_max_err", fmt_g(diag_err, 3));

    const std::string csv = phase_map_csv(pm);
    const GrayImage img = phase_map_image(pm);
    const std::string pgm = encode_pgm(img);
    bool roundtrip = parse_phase_map_csv(csv) == pm && decode_pgm(pgm) == img;
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        const std::string stem = "phase_map_stage" + std::to_string(stage) + "_" + branch_name;
        write_text_file(join(out_dir, stem + ".csv"), csv);
        write_text_file(join(out_dir, stem + ".pgm"), pgm);
        roundtrip = roundtrip && parse_phase_map_csv(read_binary_file(join(out_dir, stem + ".csv"))) == pm &&
                    decode_pgm(read_binary_file(join(out_dir, stem + ".pgm"))) == img;
        kv("csv", join(out_dir, stem + ".csv"));
        kv("pgm", join(out_dir, stem + ".pgm"));
    }
    kv("roundtrip", pass_fail(roundtrip));
    const bool ok = lo >= -1.0 && hi <= 1.0 && diag_err <= 1e-12 && roundtrip;
    kv("status", pass_fail(ok));
    return ok ? 0 : kExitFail;
}

int cmd_phase_map(const RunFlags& flags, const std::string& checkpoint, std::size_t stage, std::size_t window,
                  const std::string& branch, std::size_t res, const std::string& out_dir) {
    const RunConfig rc = flags.resolve();
    print_run(rc);
    Precision precision = rc.train.precision;
    if (!checkpoint.empty()) {
        // The checkpoint's scalar size decides the precision.
        const std::string bytes = read_binary_file(checkpoint);
        precision = bytes.size() > 8 && bytes[8] == 4 ? Precision::F32 : Precision::F64;
    }
    return precision == Precision::F32 ? run_phase_map<float>(rc, checkpoint, stage, window, branch, res, out_dir)
                                       : run_phase_map<double>(rc, checkpoint, stage, window, branch, res, out_dir);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wave-MLP toolkit: wave algebra, gradient checks, cost accounting, toy training"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    std::uint64_t seed = 0;

    auto* sp = app.add_subcommand("superpose", "Superpose two phasors; compare with Cartesian arithmetic");
    double a1 = 0, a2 = 0, t1 = 0, t2 = 0;
    sp->add_option("--a1", a1, "First amplitude")->required();
    sp->add_option("--a2", a2, "Second amplitude")->required();
    sp->add_option("--t1", t1, "First phase (rad)")->required();
    sp->add_option("--t2", t2, "Second phase (rad)")->required();
    sp->add_option("--seed", seed, "Seed (unused, printed)");

    auto* cnt = app.add_subcommand("count", "Parameter and FLOP counts against published sizes");
    std::string count_preset = "T";
    std::string count_config;
    std::size_t res = 224;
    cnt->add_option("--preset", count_preset, "T*, T, S, M, B or tiny")->check(CLI::IsMember({"T*", "T", "S", "M", "B", "tiny"}));
    cnt->add_option("--config", count_config, "Architecture config JSON")->check(CLI::ExistingFile);
    cnt->add_option("--res", res, "Square input resolution")->check(CLI::PositiveNumber);
    cnt->add_option("--seed", seed, "Seed (unused, printed)");

    auto* cg = app.add_subcommand("check-grads", "Finite-difference gradient checks");
    std::string cg_config, cg_preset;
    std::size_t max_entries = 0;
    cg->add_option("--config", cg_config, "Architecture or run config JSON for the end-to-end check")->check(CLI::ExistingFile);
    cg->add_option("--preset", cg_preset, "Preset for the end-to-end check (default tiny)")
        ->check(CLI::IsMember({"T*", "T", "S", "M", "B", "tiny"}));
    cg->add_option("--seed", seed, "Seed for random inputs");
    cg->add_option("--max-entries", max_entries, "Entries sampled per tensor (0 = all; end-to-end defaults to 24)");

    auto* tr = app.add_subcommand("train", "Train on a synthetic task");
    RunFlags train_flags;
    train_flags.add(tr);
    std::string train_out;
    bool train_check = false;
    tr->add_option("--out", train_out, "Directory for history CSVs, run.json and model.bin");
    tr->add_flag("--check", train_check, "Exit 1 if the expected train accuracy is not reached in time");

    auto* ab = app.add_subcommand("ablate", "Phase mode / estimator / window ablation tables");
    RunFlags ablate_flags;
    ablate_flags.add(ab);
    std::string axis = "all", seeds_arg = "0,1,2", ablate_out;
    ab->add_option("--axis", axis, "phase_mode, estimator, window or all")
        ->check(CLI::IsMember({"phase_mode", "estimator", "window", "all"}));
    ab->add_option("--seeds", seeds_arg, "Comma-separated seed list");
    ab->add_option("--out", ablate_out, "Directory for ablation_<axis>.csv");

    auto* pm = app.add_subcommand("phase-map", "Export cos phase-difference maps as CSV and PGM");
    RunFlags pm_flags;
    pm_flags.add(pm);
    std::string checkpoint, branch = "h", pm_out;
    std::size_t stage = 3, window = 7, pm_res = 64;
    pm->add_option("--checkpoint", checkpoint, "model.bin from train --out (otherwise trains first)")->check(CLI::ExistingFile);
    pm->add_option("--stage", stage, "Stage (3 or 4)")->check(CLI::IsMember({3, 4}));
    pm->add_option("--window", window, "Odd neighbourhood size");
    pm->add_option("--branch", branch, "h or w")->check(CLI::IsMember({"h", "w"}));
    pm->add_option("--res", pm_res, "Probe image resolution")->check(CLI::Range(4, 1024));
    pm->add_option("--out", pm_out, "Output directory");

    auto* st = app.add_subcommand("selftest", "Run the full invariant suite");
    st->add_option("--seed", seed, "Seed for random inputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*sp) return cmd_superpose(a1, a2, t1, t2, seed);
        if (*cnt) return cmd_count(count_preset, count_config, res, seed);
        if (*cg) return cmd_check_grads(cg_config, cg_preset, seed, max_entries);
        if (*tr) return cmd_train(train_flags, train_out, train_check);
        if (*ab) return cmd_ablate(ablate_flags, axis, seeds_arg, ablate_out);
        if (*pm) return cmd_phase_map(pm_flags, checkpoint, stage, window, branch, pm_res, pm_out);
        if (*st) {
            kv("seed", seed);
            const auto results = selftest_suite(seed);
            print_checks(results);
            return summarize(results);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFail;
    }
    return kExitUsage;
}
