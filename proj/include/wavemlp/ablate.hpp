#pragma once

#include <wavemlp/model.hpp>
#include <wavemlp/train.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace wavemlp {

enum class AblationAxis { PhaseMode, Estimator, Window };

inline std::string_view to_string(AblationAxis a) {
    switch (a) {
    case AblationAxis::PhaseMode: return "phase_mode";
    case AblationAxis::Estimator: return "estimator";
    case AblationAxis::Window: return "window";
    }
    return "?";
}

inline AblationAxis parse_ablation_axis(std::string_view s) {
    if (s == "phase_mode") return AblationAxis::PhaseMode;
    if (s == "estimator") return AblationAxis::Estimator;
    if (s == "window") return AblationAxis::Window;
    throw ConfigError("unknown ablation axis '" + std::string(s) + "' (phase_mode | estimator | window)");
}

inline constexpr std::array<AblationAxis, 3> kAblationAxes{AblationAxis::PhaseMode, AblationAxis::Estimator,
                                                           AblationAxis::Window};

struct AblationRow {
    std::string setting; ///< machine value: phase mode name or window size
    std::string label;   ///< table row name
    ArchConfig config;
};

/// Row configurations for one axis. `base` supplies the architecture; its
/// phase mode is the "dynamic" estimator used by the phase-mode and window
/// rows and must be ChannelFC or DepthWise. Every row gets the task's image
/// size so that static phases and the all-token window resolve.
inline std::vector<AblationRow> ablation_rows(AblationAxis axis, const ArchConfig& base, const SynthTask& task) {
    if (base.phase_mode != PhaseMode::ChannelFC && base.phase_mode != PhaseMode::DepthWise) {
        throw ConfigError("ablation base model needs a dynamic phase mode (channel_fc or depthwise)");
    }
    ArchConfig b = base;
    b.image_size = std::make_pair(task.height, task.width);
    b.num_classes = task.num_classes;
    b.in_channels = task.channels;
    auto with_mode = [&](PhaseMode m) {
        ArchConfig c = b;
        c.phase_mode = m;
        return c;
    };
    auto with_window = [&](std::size_t w) {
        ArchConfig c = b;
        c.window = w;
        return c;
    };
    std::vector<AblationRow> rows;
    switch (axis) {
    case AblationAxis::PhaseMode:
        rows.push_back({"none", "No phase", with_mode(PhaseMode::None)});
        rows.push_back({"static", "Static phase", with_mode(PhaseMode::Static)});
        rows.push_back({std::string(to_string(b.phase_mode)), "Dynamic phase", b});
        break;
    case AblationAxis::Estimator:
        rows.push_back({"none", "Baseline", with_mode(PhaseMode::None)});
        rows.push_back({"identity", "Identity", with_mode(PhaseMode::Identity)});
        rows.push_back({"depthwise", "Depth-wise", with_mode(PhaseMode::DepthWise)});
        rows.push_back({"channel_fc", "Channel-FC", with_mode(PhaseMode::ChannelFC)});
        break;
    case AblationAxis::Window:
        rows.push_back({"3", "3", with_window(3)});
        rows.push_back({"5", "5", with_window(5)});
        rows.push_back({"7", "7", with_window(7)});
        rows.push_back({"all", "All", with_window(kWindowAll)});
        break;
    }
    for (auto& r : rows) r.config.validate();
    return rows;
}

struct AblationResultRow {
    std::string setting;
    std::string label;
    std::size_t params = 0;
    std::uint64_t flops = 0;
    std::vector<double> val_acc; ///< final-epoch accuracy, one per seed
    std::vector<double> train_acc;

    double mean() const {
        double s = 0;
        for (double v : val_acc) s += v;
        return val_acc.empty() ? 0.0 : s / static_cast<double>(val_acc.size());
    }
    /// Sample standard deviation (n - 1); 0 for a single seed.
    double sd() const {
        if (val_acc.size() < 2) return 0.0;
        const double m = mean();
        double s = 0;
        for (double v : val_acc) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(val_acc.size() - 1));
    }
};

struct AblationTable {
    AblationAxis axis = AblationAxis::PhaseMode;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationResultRow> rows;
};

/// Worker cap from WAVEMLP_THREADS (default 1).
inline std::size_t worker_threads_from_env() {
    const char* v = std::getenv("WAVEMLP_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("WAVEMLP_THREADS must be a positive integer, got '" + std::string(v) + "'");
    return static_cast<std::size_t>(n);
}

/// Trains every (row, seed) cell with tc (tc.seed replaced by the cell seed)
/// and collects final-epoch accuracies. Cells are independent and write to
/// fixed slots, so the table does not depend on `threads`.
inline AblationTable ablate(AblationAxis axis, const ArchConfig& base, const SynthTask& task, const TrainConfig& tc,
                            const std::vector<std::uint64_t>& seeds, std::size_t threads = 1) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    tc.validate();
    task.validate();
    const auto rows = ablation_rows(axis, base, task);

    AblationTable table;
    table.axis = axis;
    table.seeds = seeds;
    for (const auto& r : rows) {
        AblationResultRow out;
        out.setting = r.setting;
        out.label = r.label;
        out.params = count_params(r.config);
        out.flops = count_flops(r.config, task.height, task.width).total;
        out.val_acc.assign(seeds.size(), 0.0);
        out.train_acc.assign(seeds.size(), 0.0);
        table.rows.push_back(std::move(out));
    }

    const std::size_t cells = rows.size() * seeds.size();
    auto run_cell = [&](std::size_t cell) {
        const std::size_t r = cell / seeds.size(), s = cell % seeds.size();
        TrainConfig cfg = tc;
        cfg.seed = seeds[s];
        History h = tc.precision == Precision::F32 ? train<float>(rows[r].config, task, cfg).history
                                                   : train<double>(rows[r].config, task, cfg).history;
        table.rows[r].val_acc[s] = h.val_acc.back();
        table.rows[r].train_acc[s] = h.train_acc.back();
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(threads, cells));
    if (n_workers == 1) {
        for (std::size_t c = 0; c < cells; ++c) run_cell(c);
        return table;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t c = next++; c < cells; c = next++) {
                try {
                    run_cell(c);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return table;
}

/// axis,setting,label,params,flops,seeds,val_acc_mean,val_acc_sd,val_acc_seed<k>...
inline std::string ablation_csv(const AblationTable& t) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "axis,setting,label,params,flops,seeds,val_acc_mean,val_acc_sd";
    for (auto s : t.seeds) os << ",val_acc_seed" << s;
    os << '\n';
    for (const auto& r : t.rows) {
        os << to_string(t.axis) << ',' << r.setting << ',' << r.label << ',' << r.params << ',' << r.flops << ','
           << t.seeds.size() << ',' << r.mean() << ',' << r.sd();
        for (double v : r.val_acc) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

} // namespace wavemlp
