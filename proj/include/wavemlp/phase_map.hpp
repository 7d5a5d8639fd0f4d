#pragma once

#include <wavemlp/model.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

// Phase-difference maps. For every token j of a stage's grid and every
// offset (dy, dx) of a window x window neighbourhood centred on j, the map
// holds the channel-averaged cosine of the phase difference
//
//   value(j, k) = mean_c cos(theta[j, c] - theta[k, c]),  k = j + (dy, dx)
//
// Neighbours outside the grid are marked invalid and hold 0.
//
// CSV:  row,col,dy,dx,valid,value    one line per (token, offset), row-major
//       over tokens and then offsets, values printed with 17 significant digits.
// PGM:  binary P5, width grid_w * window, height grid_h * window, maxval 255.
//       Token (row, col) owns the window x window tile at (row * window,
//       col * window); pixel = round((value + 1) / 2 * 255).

namespace wavemlp {

enum class PhaseBranch { Height, Width };

inline PhaseBranch parse_phase_branch(const std::string& s) {
    if (s == "h") return PhaseBranch::Height;
    if (s == "w") return PhaseBranch::Width;
    throw ConfigError("phase-map branch must be 'h' or 'w', got '" + s + "'");
}

struct PhaseMap {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t window = 0;
    std::vector<double> value;  ///< [grid_h, grid_w, window, window]
    std::vector<std::uint8_t> valid;

    std::size_t index(std::size_t row, std::size_t col, std::size_t oy, std::size_t ox) const {
        return ((row * grid_w + col) * window + oy) * window + ox;
    }
    friend bool operator==(const PhaseMap&, const PhaseMap&) = default;
};

/// Map from a phase tensor [h, w, d] (one image).
template <typename T>
PhaseMap phase_difference_map(const Tensor<T>& phase, std::size_t window) {
    if (phase.rank() != 3) throw DimensionError("phase_difference_map: expected [h,w,d] phases, got " + to_string(phase.shape()));
    if (window == 0 || window % 2 == 0) throw ConfigError("phase map window must be odd, got " + std::to_string(window));
    const std::size_t H = phase.shape()[0], W = phase.shape()[1], D = phase.shape()[2];
    const long half = static_cast<long>(window / 2);
    PhaseMap m;
    m.grid_h = H;
    m.grid_w = W;
    m.window = window;
    m.value.assign(H * W * window * window, 0.0);
    m.valid.assign(m.value.size(), 0);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            const T* tj = &phase[(r * W + c) * D];
            for (std::size_t oy = 0; oy < window; ++oy)
                for (std::size_t ox = 0; ox < window; ++ox) {
                    const long kr = static_cast<long>(r) + static_cast<long>(oy) - half;
                    const long kc = static_cast<long>(c) + static_cast<long>(ox) - half;
                    if (kr < 0 || kc < 0 || kr >= static_cast<long>(H) || kc >= static_cast<long>(W)) continue;
                    const T* tk = &phase[(static_cast<std::size_t>(kr) * W + static_cast<std::size_t>(kc)) * D];
                    double s = 0.0;
                    for (std::size_t ch = 0; ch < D; ++ch)
                        s += std::cos(static_cast<double>(tj[ch]) - static_cast<double>(tk[ch]));
                    const std::size_t i = m.index(r, c, oy, ox);
                    m.value[i] = s / static_cast<double>(D);
                    m.valid[i] = 1;
                }
        }
    return m;
}

/// Phase map of `branch` in the last block of `stage` (1-based, 3 or 4) for
/// image `index` of `images` [b, h, w, c].
template <typename T>
PhaseMap phase_map(const ModelParams<T>& m, const Tensor<T>& images, std::size_t stage, std::size_t window,
                   PhaseBranch branch = PhaseBranch::Height, std::size_t index = 0) {
    if (stage != 3 && stage != 4) throw ConfigError("phase maps are defined for stages 3 and 4, got " + std::to_string(stage));
    const PhaseMode mode = m.config.phase_mode;
    if (mode == PhaseMode::None || mode == PhaseMode::Static) {
        throw ConfigError("phase maps need input-dependent phases; mode '" + std::string(to_string(mode)) +
                          "' is unsupported");
    }
    if (images.rank() != 4 || index >= images.shape()[0]) throw DimensionError("phase_map: image index out of range");
    const Shape& is = images.shape();
    const std::size_t per = is[1] * is[2] * is[3];
    Tensor<T> one({1, is[1], is[2], is[3]});
    std::copy_n(&images[index * per], per, &one[0]);
    ForwardTrace<T> trace;
    predict(m, one, &trace);
    const auto& last = trace.stages[stage - 1].back();
    const Tensor<T>& phase = branch == PhaseBranch::Height ? last.patm_h.phase : last.patm_w.phase;
    const Shape& ps = phase.shape();
    return phase_difference_map(phase.reshaped({ps[1], ps[2], ps[3]}), window);
}

inline std::uint8_t phase_pixel(double v) {
    const double p = std::round((v + 1.0) / 2.0 * 255.0);
    return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

inline std::string phase_map_csv(const PhaseMap& m) {
    std::string out = "row,col,dy,dx,valid,value\n";
    const long half = static_cast<long>(m.window / 2);
    char buf[64];
    for (std::size_t r = 0; r < m.grid_h; ++r)
        for (std::size_t c = 0; c < m.grid_w; ++c)
            for (std::size_t oy = 0; oy < m.window; ++oy)
                for (std::size_t ox = 0; ox < m.window; ++ox) {
                    const std::size_t i = m.index(r, c, oy, ox);
                    std::snprintf(buf, sizeof buf, "%.17g", m.value[i]);
                    out += std::to_string(r) + ',' + std::to_string(c) + ',' +
                           std::to_string(static_cast<long>(oy) - half) + ',' +
                           std::to_string(static_cast<long>(ox) - half) + ',' + std::to_string(int{m.valid[i]}) + ',' +
                           buf + '\n';
                }
    return out;
}

inline PhaseMap parse_phase_map_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "row,col,dy,dx,valid,value") throw Error("phase map CSV: bad header");
    struct Entry {
        long r, c, dy, dx;
        int valid;
        double v;
    };
    std::vector<Entry> entries;
    long max_r = -1, max_c = -1, max_d = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Entry e{};
        std::istringstream ls(line);
        char comma[5];
        std::string value;
        if (!(ls >> e.r >> comma[0] >> e.c >> comma[1] >> e.dy >> comma[2] >> e.dx >> comma[3] >> e.valid >> comma[4]) ||
            !std::getline(ls, value)) {
            throw Error("phase map CSV: malformed line '" + line + "'");
        }
        for (char ch : comma)
            if (ch != ',') throw Error("phase map CSV: malformed line '" + line + "'");
        e.v = std::stod(value);
        max_r = std::max(max_r, e.r);
        max_c = std::max(max_c, e.c);
        max_d = std::max({max_d, std::abs(e.dy), std::abs(e.dx)});
        entries.push_back(e);
    }
    PhaseMap m;
    m.grid_h = static_cast<std::size_t>(max_r + 1);
    m.grid_w = static_cast<std::size_t>(max_c + 1);
    m.window = static_cast<std::size_t>(2 * max_d + 1);
    const std::size_t n = m.grid_h * m.grid_w * m.window * m.window;
    if (entries.size() != n) throw Error("phase map CSV: expected " + std::to_string(n) + " entries");
    m.value.assign(n, 0.0);
    m.valid.assign(n, 0);
    for (const auto& e : entries) {
        const std::size_t i = m.index(static_cast<std::size_t>(e.r), static_cast<std::size_t>(e.c),
                                      static_cast<std::size_t>(e.dy + max_d), static_cast<std::size_t>(e.dx + max_d));
        m.value[i] = e.v;
        m.valid[i] = static_cast<std::uint8_t>(e.valid);
    }
    return m;
}

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; ///< row-major

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline GrayImage phase_map_image(const PhaseMap& m) {
    GrayImage img;
    img.width = m.grid_w * m.window;
    img.height = m.grid_h * m.window;
    img.pixels.assign(img.width * img.height, 0);
    for (std::size_t r = 0; r < m.grid_h; ++r)
        for (std::size_t c = 0; c < m.grid_w; ++c)
            for (std::size_t oy = 0; oy < m.window; ++oy)
                for (std::size_t ox = 0; ox < m.window; ++ox)
                    img.pixels[(r * m.window + oy) * img.width + c * m.window + ox] = phase_pixel(m.value[m.index(r, c, oy, ox)]);
    return img;
}

inline std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    return out;
}

inline GrayImage decode_pgm(const std::string& bytes) {
    std::istringstream in(bytes);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    if (!(in >> magic >> w >> h >> maxval) || magic != "P5" || maxval != 255) throw Error("PGM: unsupported header");
    in.get(); // single whitespace before the raster
    GrayImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(w * h);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size())))
        throw Error("PGM: truncated raster");
    return img;
}

inline std::string read_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace wavemlp
