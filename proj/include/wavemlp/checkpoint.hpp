#pragma once

#include <wavemlp/config_json.hpp>
#include <wavemlp/model.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

// Model files, little-endian:
//
//   "WAVEMLP1"                 8-byte magic
//   u32 scalar size            4 (f32) or 8 (f64)
//   u64 n, n bytes             architecture config as JSON
//   u64 tensor count
//   per tensor, in for_each_param order:
//     u64 n, n bytes           dotted parameter name
//     u64 rank, rank x u64     shape
//     numel x scalar           row-major values

namespace wavemlp {

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'W', 'A', 'V', 'E', 'M', 'L', 'P', '1'};

template <typename V>
void put(std::string& out, V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    out.append(buf, sizeof(V));
}

inline void put_string(std::string& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out += s;
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (bytes.size() - pos < n) throw Error("checkpoint: truncated file");
    }
    template <typename V>
    V get() {
        need(sizeof(V));
        V v;
        std::memcpy(&v, bytes.data() + pos, sizeof(V));
        pos += sizeof(V);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace detail

template <typename T>
std::string encode_checkpoint(const ModelParams<T>& m) {
    std::string out(detail::kCheckpointMagic, 8);
    detail::put<std::uint32_t>(out, sizeof(T));
    detail::put_string(out, arch_config_to_json(m.config).dump());
    std::uint64_t count = 0;
    m.for_each_param([&](const std::string&, const Tensor<T>&) { ++count; });
    detail::put<std::uint64_t>(out, count);
    m.for_each_param([&](const std::string& name, const Tensor<T>& t) {
        detail::put_string(out, name);
        detail::put<std::uint64_t>(out, t.rank());
        for (auto d : t.shape()) detail::put<std::uint64_t>(out, d);
        out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(T));
    });
    return out;
}

template <typename T>
ModelParams<T> decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0)
        throw Error("checkpoint: bad magic");
    detail::Reader rd{bytes, 8};
    if (rd.get<std::uint32_t>() != sizeof(T)) throw Error("checkpoint: scalar type does not match");
    const ArchConfig cfg = arch_config_from_json(nlohmann::json::parse(rd.get_string()));
    ModelParams<T> m = build<T>(cfg, 0);
    std::uint64_t expected = 0;
    m.for_each_param([&](const std::string&, Tensor<T>&) { ++expected; });
    if (rd.get<std::uint64_t>() != expected) throw Error("checkpoint: tensor count does not match the architecture");
    m.for_each_param([&](const std::string& name, Tensor<T>& t) {
        if (rd.get_string() != name) throw Error("checkpoint: unexpected tensor, wanted '" + name + "'");
        Shape shape(rd.get<std::uint64_t>());
        for (auto& d : shape) d = rd.get<std::uint64_t>();
        if (shape != t.shape()) throw Error("checkpoint: shape mismatch for '" + name + "'");
        rd.need(t.size() * sizeof(T));
        std::memcpy(t.data().data(), bytes.data() + rd.pos, t.size() * sizeof(T));
        rd.pos += t.size() * sizeof(T);
    });
    if (rd.pos != bytes.size()) throw Error("checkpoint: trailing bytes");
    return m;
}

template <typename T>
void save_checkpoint(const ModelParams<T>& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    const std::string bytes = encode_checkpoint(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
ModelParams<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint<T>(ss.str());
}

} // namespace wavemlp
