#pragma once

#include <wavemlp/model.hpp>
#include <wavemlp/optim.hpp>
#include <wavemlp/synth.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace wavemlp {

enum class Precision { F32, F64 };

inline Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::F32;
    if (s == "f64") return Precision::F64;
    throw ConfigError("precision must be f32 or f64, got '" + s + "'");
}

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::string schedule = "cosine"; ///< cosine | constant
    std::uint64_t seed = 0;
    Precision precision = Precision::F64;
    double dropout = 0.0;

    void validate() const {
        if (epochs == 0) throw ConfigError("epochs must be >= 1");
        if (batch_size == 0) throw ConfigError("batch size must be >= 1");
        if (lr < 0) throw ConfigError("learning rate must be non-negative");
        if (schedule != "cosine" && schedule != "constant") throw ConfigError("unknown schedule '" + schedule + "'");
    }
};

struct History {
    std::vector<double> loss; ///< per optimisation step
    std::vector<double> lr;   ///< per optimisation step
    std::vector<double> train_acc; ///< per epoch, full train split after the epoch
    std::vector<double> val_acc;   ///< per epoch
    std::vector<std::size_t> epoch_end_step;

    std::size_t steps() const { return loss.size(); }
};

template <typename T>
struct TrainResult {
    History history;
    ModelParams<T> model;
};

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

template <typename T>
std::size_t argmax_row(const Tensor<T>& logits, std::size_t row) {
    const std::size_t k = logits.shape()[1];
    const T* r = &logits[row * k];
    return static_cast<std::size_t>(std::max_element(r, r + k) - r);
}

/// Fraction of correctly classified samples, evaluated in chunks.
template <typename T>
double accuracy(const ModelParams<T>& m, const Dataset<T>& ds, std::size_t chunk = 128) {
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, ds.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Dataset<T> b = ds.batch(idx);
        const Tensor<T> logits = predict(m, b.images);
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (static_cast<int>(argmax_row(logits, i)) == b.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Cross-entropy training with AdamW; the data order, initialisation and
/// results are fully determined by (task.seed, tc.seed).
template <typename T>
TrainResult<T> train(const ArchConfig& cfg, const SynthTask& task, const TrainConfig& tc,
                     const std::function<void(std::size_t epoch, const History&)>& on_epoch = {}) {
    tc.validate();
    if (cfg.num_classes != task.num_classes || cfg.in_channels != task.channels) {
        throw ConfigError("model config does not match task classes/channels");
    }
    auto [train_set, val_set] = generate_task<T>(task);
    TrainResult<T> result{History{}, build<T>(cfg, tc.seed)};
    ModelParams<T>& model = result.model;
    History& hist = result.history;

    std::vector<Tensor<T>*> params;
    model.for_each_param([&](const std::string&, Tensor<T>& t) { params.push_back(&t); });
    std::vector<AdamState<T>> state(params.size());

    AdamWConfig opt;
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.eps = tc.eps;
    opt.weight_decay = tc.weight_decay;

    const std::size_t per_epoch = steps_per_epoch(train_set.size(), tc.batch_size);
    const std::size_t total = tc.epochs * per_epoch;
    std::mt19937_64 shuffle_rng(tc.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 dropout_rng(tc.seed + 1);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + tc.batch_size)));
            const Dataset<T> batch = train_set.batch(idx);

            Tape<T> tape;
            ForwardOptions fo;
            fo.dropout.p = tc.dropout;
            fo.dropout.rng = &dropout_rng;
            Var<T> logits = forward(tape, model, tape.leaf(batch.images, false), nullptr, fo);
            Var<T> loss = softmax_cross_entropy(logits, std::span<const int>(batch.labels));
            const double loss_value = static_cast<double>(loss.value()[0]);
            if (!std::isfinite(loss_value)) {
                throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
            }
            tape.backward(loss);

            opt.lr = tc.schedule == "cosine" ? cosine_lr(static_cast<double>(step), static_cast<double>(total), tc.lr)
                                             : tc.lr;
            for (std::size_t p = 0; p < params.size(); ++p) {
                const Tensor<T>* g = tape.grad_of(*params[p]);
                if (!g) throw ContractError("parameter without gradient binding");
                adamw_step(*params[p], *g, state[p], step + 1, opt);
            }
            hist.loss.push_back(loss_value);
            hist.lr.push_back(opt.lr);
            ++step;
        }
        hist.epoch_end_step.push_back(step);
        hist.train_acc.push_back(accuracy(model, train_set));
        hist.val_acc.push_back(accuracy(model, val_set));
        if (on_epoch) on_epoch(epoch, hist);
    }
    return result;
}

/// Per-step history: step,epoch,lr,loss
inline std::string history_steps_csv(const History& h) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "step,epoch,lr,loss\n";
    std::size_t epoch = 0;
    for (std::size_t s = 0; s < h.loss.size(); ++s) {
        while (epoch < h.epoch_end_step.size() && s >= h.epoch_end_step[epoch]) ++epoch;
        os << s << ',' << epoch << ',' << h.lr[s] << ',' << h.loss[s] << '\n';
    }
    return os.str();
}

/// Per-epoch history: epoch,step,train_acc,val_acc
inline std::string history_epochs_csv(const History& h) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "epoch,step,train_acc,val_acc\n";
    for (std::size_t e = 0; e < h.train_acc.size(); ++e)
        os << e << ',' << h.epoch_end_step[e] << ',' << h.train_acc[e] << ',' << h.val_acc[e] << '\n';
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
}

} // namespace wavemlp
