#pragma once

#include <wavemlp/model.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>

// ArchConfig <-> JSON.
//
//   {
//     "preset": "T",                  optional base preset, other keys override it
//     "name": "my-model",
//     "stages": [{"dim": 64, "depth": 2, "expansion": 4}, ... 4 entries],
//     "patch_sizes": [4, 2, 2, 2],
//     "window": 7,                    odd integer, or "all"
//     "phase_mode": "channel_fc",     none | static | identity | channel_fc | depthwise
//     "num_classes": 1000,
//     "in_channels": 3,
//     "image_size": [224, 224]        required for static phases / "all" window
//   }

namespace wavemlp {

inline ArchConfig arch_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"preset",      "name",        "stages",     "patch_sizes", "window",
                                             "phase_mode", "num_classes", "in_channels", "image_size"};
    if (!j.is_object()) throw ConfigError("architecture config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown architecture config key '" + key + "'");
    }
    try {
        ArchConfig c;
        if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
        if (j.contains("name")) c.name = j.at("name").get<std::string>();
        if (j.contains("stages")) {
            c.stages.clear();
            for (const auto& s : j.at("stages")) {
                StageConfig st;
                st.dim = s.at("dim").get<std::size_t>();
                st.depth = s.at("depth").get<std::size_t>();
                st.expansion = s.value("expansion", std::size_t{4});
                c.stages.push_back(st);
            }
        }
        if (j.contains("patch_sizes")) c.patch_sizes = j.at("patch_sizes").get<std::vector<std::size_t>>();
        if (j.contains("window")) {
            const auto& w = j.at("window");
            if (w.is_string()) {
                if (w.get<std::string>() != "all") throw ConfigError("window must be an odd integer or \"all\"");
                c.window = kWindowAll;
            } else {
                c.window = w.get<std::size_t>();
                if (c.window == 0) throw ConfigError("window must be positive");
            }
        }
        if (j.contains("phase_mode")) c.phase_mode = parse_phase_mode(j.at("phase_mode").get<std::string>());
        if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<std::size_t>();
        if (j.contains("in_channels")) c.in_channels = j.at("in_channels").get<std::size_t>();
        if (j.contains("image_size")) {
            const auto v = j.at("image_size").get<std::vector<std::size_t>>();
            if (v.size() != 2) throw ConfigError("image_size must be [height, width]");
            c.image_size = std::make_pair(v[0], v[1]);
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed architecture config: ") + e.what());
    }
}

inline nlohmann::json arch_config_to_json(const ArchConfig& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : c.stages) j["stages"].push_back({{"dim", s.dim}, {"depth", s.depth}, {"expansion", s.expansion}});
    j["patch_sizes"] = c.patch_sizes;
    if (c.window == kWindowAll) {
        j["window"] = "all";
    } else {
        j["window"] = c.window;
    }
    j["phase_mode"] = std::string(to_string(c.phase_mode));
    j["num_classes"] = c.num_classes;
    j["in_channels"] = c.in_channels;
    if (c.image_size) j["image_size"] = {c.image_size->first, c.image_size->second};
    return j;
}

inline ArchConfig load_arch_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return arch_config_from_json(j);
}

} // namespace wavemlp
