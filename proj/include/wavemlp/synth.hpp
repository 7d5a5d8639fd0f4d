#pragma once

#include <wavemlp/tensor.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

// Synthetic image classification tasks for desk-scale training.
//
// "interference": a horizontal bar (channel 0) and a vertical bar (channel 1)
// are planted at random positions; the label is the quadrant of the vertical
// bar's centre relative to the horizontal bar's centre
// (label = [dx > 0] + 2 [dy > 0]). Neither pattern alone carries the label, so
// a classifier has to relate features at different positions.
//
// "blob": one Gaussian blob in all channels; the label is the image quadrant
// holding its centre. Control task without a relational component.

namespace wavemlp {

struct SynthTask {
    std::string generator = "interference";
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 3;
    std::size_t num_classes = 4;
    std::uint64_t seed = 0;
    std::size_t train_size = 512;
    std::size_t val_size = 256;
    double noise = 0.1;

    void validate() const {
        if (generator != "interference" && generator != "blob") {
            throw ConfigError("unknown synthetic generator '" + generator + "'");
        }
        if (num_classes != 4) throw ConfigError("synthetic tasks have exactly 4 classes");
        if (channels < 2) throw ConfigError("synthetic tasks need at least 2 channels");
        if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
        if (train_size == 0) throw ConfigError("train split must be non-empty");
    }
};

template <typename T>
struct Dataset {
    Tensor<T> images; ///< [n, h, w, c]
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    /// Gathers the listed samples into a batch.
    Dataset batch(const std::vector<std::size_t>& idx) const {
        const Shape& s = images.shape();
        const std::size_t per = s[1] * s[2] * s[3];
        Dataset out;
        out.images = Tensor<T>({idx.size(), s[1], s[2], s[3]});
        out.labels.reserve(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(&images[idx[i] * per], per, &out.images[i * per]);
            out.labels.push_back(labels[idx[i]]);
        }
        return out;
    }
};

namespace detail {

inline constexpr std::size_t kBarLength = 4;

template <typename T, typename Rng>
void draw_interference(const SynthTask& task, int label, Rng& rng, T* img) {
    const std::size_t H = task.height, W = task.width, C = task.channels;
    const int want_dx = label & 1;
    const int want_dy = (label >> 1) & 1;
    std::uniform_int_distribution<std::size_t> ya_d(0, H - 1), xa_d(0, W - kBarLength);
    std::uniform_int_distribution<std::size_t> yb_d(0, H - kBarLength), xb_d(0, W - 1);
    for (;;) {
        const std::size_t ya = ya_d(rng), xa = xa_d(rng), yb = yb_d(rng), xb = xb_d(rng);
        const double dx = static_cast<double>(xb) - (static_cast<double>(xa) + 1.5);
        const double dy = (static_cast<double>(yb) + 1.5) - static_cast<double>(ya);
        if (std::abs(dx) < 1.5 || std::abs(dy) < 1.5) continue;
        if ((dx > 0) != static_cast<bool>(want_dx) || (dy > 0) != static_cast<bool>(want_dy)) continue;
        for (std::size_t k = 0; k < kBarLength; ++k) {
            img[(ya * W + xa + k) * C + 0] += T{1};
            img[((yb + k) * W + xb) * C + 1] += T{1};
        }
        return;
    }
}

template <typename T, typename Rng>
void draw_blob(const SynthTask& task, int label, Rng& rng, T* img) {
    const std::size_t H = task.height, W = task.width, C = task.channels;
    const double hh = static_cast<double>(H) / 2, hw = static_cast<double>(W) / 2;
    std::uniform_real_distribution<double> u(0.15, 0.85);
    const double cy = ((label >> 1) & 1 ? hh : 0.0) + u(rng) * hh;
    const double cx = (label & 1 ? hw : 0.0) + u(rng) * hw;
    const double sigma = 0.08 * std::min(H, W);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            const T v = static_cast<T>(std::exp(-r2 / (2 * sigma * sigma)));
            for (std::size_t c = 0; c < C; ++c) img[(y * W + x) * C + c] += v;
        }
}

} // namespace detail

/// `count` samples with balanced labels (cycling 0..3) from `rng`.
template <typename T, typename Rng>
Dataset<T> generate_samples(const SynthTask& task, std::size_t count, Rng& rng) {
    task.validate();
    const std::size_t per = task.height * task.width * task.channels;
    Dataset<T> ds;
    ds.images = Tensor<T>({count, task.height, task.width, task.channels});
    ds.labels.resize(count);
    std::normal_distribution<double> noise(0.0, task.noise);
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % task.num_classes);
        T* img = &ds.images[i * per];
        if (task.noise > 0) {
            for (std::size_t k = 0; k < per; ++k) img[k] = static_cast<T>(noise(rng));
        }
        if (task.generator == "interference") {
            detail::draw_interference(task, label, rng, img);
        } else {
            detail::draw_blob(task, label, rng, img);
        }
        ds.labels[i] = label;
    }
    return ds;
}

/// Deterministic (train, validation) split for the task's seed.
template <typename T>
std::pair<Dataset<T>, Dataset<T>> generate_task(const SynthTask& task) {
    std::mt19937_64 rng(task.seed);
    Dataset<T> train = generate_samples<T>(task, task.train_size, rng);
    Dataset<T> val = generate_samples<T>(task, task.val_size, rng);
    return {std::move(train), std::move(val)};
}

} // namespace wavemlp
