#pragma once

#include <wavemlp/config_json.hpp>
#include <wavemlp/train.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <utility>

// A run file bundles the three sections used by train / ablate / phase-map:
//
//   {
//     "model": { ...architecture config... },
//     "task":  {"generator": "interference", "height": 16, "width": 16, "channels": 3,
//               "seed": 0, "train_size": 2048, "val_size": 256, "noise": 0.1},
//     "train": {"epochs": 31, "batch_size": 32, "lr": 0.002, "weight_decay": 0.05,
//               "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "schedule": "cosine",
//               "seed": 0, "precision": "f32", "dropout": 0.0},
//     "expect": {"min_train_acc": 0.95, "max_steps": 2000}
//   }
//
// Every section and key is optional; missing values keep their defaults.

namespace wavemlp {

struct Expectation {
    double min_train_acc = 0.95;
    std::size_t max_steps = 2000;
};

struct RunConfig {
    ArchConfig model = preset("tiny");
    SynthTask task;
    TrainConfig train;
    Expectation expect;
};

/// Defaults for train / ablate / phase-map when no run file is given. The
/// committed fixture tests/fixtures/pilot_interference.json holds the same
/// values and a test keeps them in sync.
inline RunConfig pilot_run_config() {
    RunConfig rc;
    rc.task.train_size = 2048;
    rc.task.val_size = 256;
    rc.train.epochs = 31;
    rc.train.batch_size = 32;
    rc.train.lr = 2e-3;
    rc.train.precision = Precision::F32;
    return rc;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what) {
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown " + what + " key '" + key + "'");
}

template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
    if (j.contains(key)) out = j.at(key).get<V>();
}

} // namespace detail

inline SynthTask synth_task_from_json(const nlohmann::json& j, SynthTask t = {}) {
    detail::reject_unknown(j, {"generator", "height", "width", "channels", "num_classes", "seed", "train_size", "val_size", "noise"},
                           "task");
    try {
        detail::read_opt(j, "generator", t.generator);
        detail::read_opt(j, "height", t.height);
        detail::read_opt(j, "width", t.width);
        detail::read_opt(j, "channels", t.channels);
        detail::read_opt(j, "num_classes", t.num_classes);
        detail::read_opt(j, "seed", t.seed);
        detail::read_opt(j, "train_size", t.train_size);
        detail::read_opt(j, "val_size", t.val_size);
        detail::read_opt(j, "noise", t.noise);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed task config: ") + e.what());
    }
    t.validate();
    return t;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t = {}) {
    detail::reject_unknown(j, {"epochs", "batch_size", "lr", "weight_decay", "beta1", "beta2", "eps", "schedule", "seed",
                               "precision", "dropout"},
                           "train");
    try {
        detail::read_opt(j, "epochs", t.epochs);
        detail::read_opt(j, "batch_size", t.batch_size);
        detail::read_opt(j, "lr", t.lr);
        detail::read_opt(j, "weight_decay", t.weight_decay);
        detail::read_opt(j, "beta1", t.beta1);
        detail::read_opt(j, "beta2", t.beta2);
        detail::read_opt(j, "eps", t.eps);
        detail::read_opt(j, "schedule", t.schedule);
        detail::read_opt(j, "seed", t.seed);
        detail::read_opt(j, "dropout", t.dropout);
        if (j.contains("precision")) t.precision = parse_precision(j.at("precision").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed train config: ") + e.what());
    }
    t.validate();
    return t;
}

inline nlohmann::json synth_task_to_json(const SynthTask& t) {
    return {{"generator", t.generator}, {"height", t.height},         {"width", t.width},
            {"channels", t.channels},   {"num_classes", t.num_classes}, {"seed", t.seed},
            {"train_size", t.train_size}, {"val_size", t.val_size},   {"noise", t.noise}};
}

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},   {"batch_size", t.batch_size}, {"lr", t.lr},     {"weight_decay", t.weight_decay},
            {"beta1", t.beta1},     {"beta2", t.beta2},           {"eps", t.eps},   {"schedule", t.schedule},
            {"seed", t.seed},       {"precision", t.precision == Precision::F32 ? "f32" : "f64"},
            {"dropout", t.dropout}};
}

/// Sections present in `j` override `base` key by key.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig rc = {}) {
    detail::reject_unknown(j, {"model", "task", "train", "expect"}, "run config");
    if (j.contains("model")) rc.model = arch_config_from_json(j.at("model"));
    if (j.contains("task")) rc.task = synth_task_from_json(j.at("task"), rc.task);
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"), rc.train);
    if (j.contains("expect")) {
        const auto& e = j.at("expect");
        detail::reject_unknown(e, {"min_train_acc", "max_steps"}, "expect");
        try {
            detail::read_opt(e, "min_train_acc", rc.expect.min_train_acc);
            detail::read_opt(e, "max_steps", rc.expect.max_steps);
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError(std::string("malformed expect section: ") + ex.what());
        }
    }
    return rc;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
    return run_config_from_json(read_json_file(path), std::move(base));
}

inline nlohmann::json run_config_to_json(const RunConfig& rc) {
    return {{"model", arch_config_to_json(rc.model)},
            {"task", synth_task_to_json(rc.task)},
            {"train", train_config_to_json(rc.train)},
            {"expect", {{"min_train_acc", rc.expect.min_train_acc}, {"max_steps", rc.expect.max_steps}}}};
}

} // namespace wavemlp
