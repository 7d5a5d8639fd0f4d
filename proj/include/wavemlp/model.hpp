#pragma once

#include <wavemlp/blocks.hpp>
#include <wavemlp/ops.hpp>
#include <wavemlp/patm.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wavemlp {

struct StageConfig {
    std::size_t dim = 0;
    std::size_t depth = 0;
    std::size_t expansion = 4;

    friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

/// Window value meaning "connect every token along the axis". Resolved per
/// stage to 2 * extent - 1, so it needs a fixed image size.
inline constexpr std::size_t kWindowAll = 0;

struct ArchConfig {
    std::string name = "custom";
    std::vector<StageConfig> stages;
    std::vector<std::size_t> patch_sizes{4, 2, 2, 2};
    std::size_t window = 7;
    PhaseMode phase_mode = PhaseMode::ChannelFC;
    std::size_t num_classes = 1000;
    std::size_t in_channels = 3;
    /// Fixed input (height, width); required by Static phases and kWindowAll.
    std::optional<std::pair<std::size_t, std::size_t>> image_size;

    void validate() const {
        if (stages.size() != 4) throw ConfigError("architecture needs exactly 4 stages, got " + std::to_string(stages.size()));
        if (patch_sizes.size() != 4) throw ConfigError("architecture needs 4 patch sizes");
        for (std::size_t s = 0; s < 4; ++s) {
            const auto& st = stages[s];
            if (st.dim == 0 || st.depth == 0 || st.expansion == 0) {
                throw ConfigError("stage " + std::to_string(s + 1) + ": dim, depth and expansion must be positive");
            }
            if (s > 0 && st.dim <= stages[s - 1].dim) {
                throw ConfigError("stage dimensions must be strictly increasing");
            }
            if (patch_sizes[s] == 0) throw ConfigError("patch sizes must be positive");
        }
        if (window != kWindowAll && window % 2 == 0) throw ConfigError("window must be odd, got " + std::to_string(window));
        if (num_classes == 0 || in_channels == 0) throw ConfigError("num_classes and in_channels must be positive");
        if ((phase_mode == PhaseMode::Static || window == kWindowAll) && !image_size) {
            throw ConfigError("static phases and the all-token window need a fixed image_size");
        }
    }

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Named configurations: "T*", "T", "S", "M", "B" (ImageNet-scale, 1000
/// classes) and "tiny" (desk-scale, 4 classes).
inline ArchConfig preset(std::string_view name) {
    ArchConfig c;
    c.name = std::string(name);
    const auto stages = [](std::array<std::size_t, 4> dims, std::array<std::size_t, 4> depths,
                           std::array<std::size_t, 4> exps) {
        std::vector<StageConfig> out;
        for (std::size_t i = 0; i < 4; ++i) out.push_back({dims[i], depths[i], exps[i]});
        return out;
    };
    if (name == "T*") {
        c.stages = stages({64, 128, 320, 512}, {2, 2, 4, 2}, {4, 4, 4, 4});
        c.phase_mode = PhaseMode::DepthWise;
    } else if (name == "T") {
        c.stages = stages({64, 128, 320, 512}, {2, 2, 4, 2}, {4, 4, 4, 4});
    } else if (name == "S") {
        c.stages = stages({64, 128, 320, 512}, {2, 3, 10, 3}, {4, 4, 4, 4});
    } else if (name == "M") {
        c.stages = stages({64, 128, 320, 512}, {3, 4, 18, 3}, {8, 8, 4, 4});
    } else if (name == "B") {
        c.stages = stages({96, 192, 384, 768}, {2, 2, 18, 2}, {4, 4, 4, 4});
    } else if (name == "tiny") {
        c.stages = stages({8, 16, 24, 32}, {1, 1, 1, 1}, {2, 2, 2, 2});
        c.num_classes = 4;
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    }
    return c;
}

inline constexpr std::array<std::string_view, 6> kPresetNames{"T*", "T", "S", "M", "B", "tiny"};

/// Token-grid extents after each stage's stem for an input of h x w.
inline std::vector<std::pair<std::size_t, std::size_t>> stage_grids(const ArchConfig& cfg, std::size_t h, std::size_t w) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
        h = ceil_div(h, cfg.patch_sizes[s]);
        w = ceil_div(w, cfg.patch_sizes[s]);
        out.emplace_back(h, w);
    }
    return out;
}

/// (height-axis window, width-axis window) used by the PATMs of a stage.
inline std::pair<std::size_t, std::size_t> stage_windows(const ArchConfig& cfg, std::size_t stage) {
    if (cfg.window != kWindowAll) return {cfg.window, cfg.window};
    const auto grids = stage_grids(cfg, cfg.image_size->first, cfg.image_size->second);
    return {2 * grids[stage].first - 1, 2 * grids[stage].second - 1};
}

template <typename T>
struct ModelParams {
    ArchConfig config;
    std::vector<StemParams<T>> stems;
    std::vector<std::vector<BlockParams<T>>> stages;
    Tensor<T> final_scale; ///< [d4]
    Tensor<T> final_shift; ///< [d4]
    Tensor<T> head;        ///< [num_classes, d4]

    /// Visits every learnable tensor in a fixed order with a dotted name.
    template <typename F>
    void for_each_param(F&& f) {
        for (std::size_t s = 0; s < stems.size(); ++s) {
            const std::string sp = "stage" + std::to_string(s + 1);
            stems[s].for_each_param([&](const char* n, auto& t) { f(sp + ".stem." + n, t); });
            for (std::size_t b = 0; b < stages[s].size(); ++b) {
                const std::string bp = sp + ".block" + std::to_string(b + 1) + ".";
                stages[s][b].for_each_param([&](const char* n, auto& t) { f(bp + n, t); });
            }
        }
        f(std::string("final_norm.scale"), final_scale);
        f(std::string("final_norm.shift"), final_shift);
        f(std::string("head"), head);
    }
    template <typename F>
    void for_each_param(F&& f) const {
        const_cast<ModelParams*>(this)->for_each_param(
            [&](const std::string& n, Tensor<T>& t) { f(n, static_cast<const Tensor<T>&>(t)); });
    }
};

/// Deterministic initialisation from a seed.
template <typename T>
ModelParams<T> build(const ArchConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams<T> m;
    m.config = cfg;
    std::optional<std::vector<std::pair<std::size_t, std::size_t>>> grids;
    if (cfg.image_size) grids = stage_grids(cfg, cfg.image_size->first, cfg.image_size->second);
    std::size_t c_in = cfg.in_channels;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& st = cfg.stages[s];
        m.stems.push_back(make_stem<T>(cfg.patch_sizes[s], c_in, st.dim, rng));
        const auto [wh, ww] = stage_windows(cfg, s);
        BlockSpatial spatial;
        if (cfg.phase_mode == PhaseMode::Static) spatial.hw = (*grids)[s];
        std::vector<BlockParams<T>> blocks;
        for (std::size_t b = 0; b < st.depth; ++b)
            blocks.push_back(make_block<T>(st.dim, st.expansion, wh, ww, cfg.phase_mode, rng, spatial));
        m.stages.push_back(std::move(blocks));
        c_in = st.dim;
    }
    const std::size_t d4 = cfg.stages.back().dim;
    m.final_scale = Tensor<T>({d4}, T{1});
    m.final_shift = Tensor<T>({d4});
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d4)));
    m.head = uniform<T>({cfg.num_classes, d4}, -bound, bound, rng);
    return m;
}

/// Activations captured by a forward pass, for analysis.
template <typename T>
struct ForwardTrace {
    std::vector<std::vector<BlockTrace<T>>> stages;
    std::vector<std::pair<std::size_t, std::size_t>> grids;
};

struct ForwardOptions {
    MlpDropout dropout;
};

/// images [b, h, w, in_channels] -> logits [b, num_classes].
template <typename T>
Var<T> forward(Tape<T>& tape, const ModelParams<T>& m, const Var<T>& images, std::type_identity_t<ForwardTrace<T>>* trace = nullptr,
               ForwardOptions opts = {}) {
    const Shape& is = images.shape();
    if (is.size() != 4 || is[3] != m.config.in_channels) {
        throw DimensionError("forward: expected images [b,h,w," + std::to_string(m.config.in_channels) + "], got " +
                             to_string(is));
    }
    if (is[1] < 4 || is[2] < 4) throw DimensionError("forward: images must be at least 4x4");
    if (trace) {
        trace->stages.assign(m.stages.size(), {});
        trace->grids.clear();
    }
    Var<T> x = images;
    for (std::size_t s = 0; s < m.stages.size(); ++s) {
        x = patch_embed(tape, x, m.stems[s]);
        if (trace) {
            trace->grids.emplace_back(x.shape()[1], x.shape()[2]);
            trace->stages[s].resize(m.stages[s].size());
        }
        for (std::size_t b = 0; b < m.stages[s].size(); ++b) {
            x = block_forward(tape, x, m.stages[s][b], trace ? &trace->stages[s][b] : nullptr, opts.dropout);
            if (!x.value().all_finite()) {
                throw NumericError("non-finite activation at stage " + std::to_string(s + 1) + " block " +
                                   std::to_string(b + 1));
            }
        }
    }
    x = normalize(tape, x, m.final_scale, m.final_shift);
    const std::size_t b = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
    Var<T> pooled = scale(reduce_sum(reshape(x, {b, h * w, c}), 1), T{1} / static_cast<T>(h * w));
    Var<T> logits = channel_fc(pooled, tape.leaf(m.head));
    if (!logits.value().all_finite()) throw NumericError("non-finite logits");
    return logits;
}

/// Inference without gradient bookkeeping.
template <typename T>
Tensor<T> predict(const ModelParams<T>& m, const Tensor<T>& images, std::type_identity_t<ForwardTrace<T>>* trace = nullptr) {
    Tape<T> tape;
    tape.set_grad_enabled(false);
    Var<T> x = tape.leaf(images, false);
    return forward(tape, m, x, trace).value();
}

template <typename T>
std::size_t count_params(const ModelParams<T>& m) {
    std::size_t n = 0;
    m.for_each_param([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

/// Parameter count from the configuration alone (no allocation).
inline std::size_t count_params(const ArchConfig& cfg) {
    cfg.validate();
    std::optional<std::vector<std::pair<std::size_t, std::size_t>>> grids;
    if (cfg.image_size) grids = stage_grids(cfg, cfg.image_size->first, cfg.image_size->second);
    std::size_t n = 0;
    std::size_t c_in = cfg.in_channels;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& st = cfg.stages[s];
        const std::size_t d = st.dim, p = cfg.patch_sizes[s];
        n += d * p * p * c_in;
        const auto [wh, ww] = stage_windows(cfg, s);
        std::optional<std::pair<std::size_t, std::size_t>> hw;
        if (cfg.phase_mode == PhaseMode::Static) hw = (*grids)[s];
        std::size_t block = 4 * d + d * d + 2 * st.expansion * d * d;
        for (const auto& shape : patm_param_shapes(d, wh, cfg.phase_mode, hw)) block += numel(shape);
        for (const auto& shape : patm_param_shapes(d, ww, cfg.phase_mode, hw)) block += numel(shape);
        n += st.depth * block;
        c_in = d;
    }
    const std::size_t d4 = cfg.stages.back().dim;
    n += 2 * d4 + cfg.num_classes * d4;
    return n;
}

/// Multiply-accumulate counts (1 MAC = 1 FLOP) for one image. Matmuls, token
/// aggregations and stems are counted; normalisation, activations and other
/// elementwise work are not. Windows are counted at full length at every
/// position, zero-padded taps included.
struct FlopReport {
    std::array<std::uint64_t, 4> stem{};
    std::array<std::uint64_t, 4> blocks{};
    std::uint64_t head = 0;
    std::uint64_t total = 0;
};

inline FlopReport count_flops(const ArchConfig& cfg, std::size_t h, std::size_t w) {
    cfg.validate();
    FlopReport r;
    const auto grids = stage_grids(cfg, h, w);
    std::size_t c_in = cfg.in_channels;
    for (std::size_t s = 0; s < 4; ++s) {
        const auto& st = cfg.stages[s];
        const std::uint64_t d = st.dim, p = cfg.patch_sizes[s];
        const std::uint64_t tokens = static_cast<std::uint64_t>(grids[s].first) * grids[s].second;
        r.stem[s] = tokens * p * p * c_in * d;
        const auto [wh, ww] = stage_windows(cfg, s);
        const std::uint64_t per_token = patm_macs_per_token(d, wh, cfg.phase_mode) +
                                        patm_macs_per_token(d, ww, cfg.phase_mode) + d * d +
                                        2 * st.expansion * d * d;
        r.blocks[s] = st.depth * tokens * per_token;
        c_in = st.dim;
    }
    r.head = static_cast<std::uint64_t>(cfg.num_classes) * cfg.stages.back().dim;
    r.total = r.head;
    for (std::size_t s = 0; s < 4; ++s) r.total += r.stem[s] + r.blocks[s];
    return r;
}

template <typename T>
FlopReport count_flops(const ModelParams<T>& m, std::size_t h, std::size_t w) {
    return count_flops(m.config, h, w);
}

} // namespace wavemlp
