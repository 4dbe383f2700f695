#pragma once

// Binary checkpoint, little-endian throughout:
//   magic "PMPMCKPT" | u32 version | u32 section count
//   per section: u32 name length | name | u64 payload length | payload
// Sections: meta (key=value text), config (key=value text), params,
// adam.m, adam.v (tensor tables). A tensor table is u32 count followed by
// u32 name length | name | u32 rank | u64 extents | values (f32 or f64).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pointmpm/harness/config.hpp"
#include "pointmpm/harness/optimizer.hpp"
#include "pointmpm/params.hpp"

namespace pointmpm::harness {

inline constexpr char kCheckpointMagic[8] = {'P', 'M', 'P', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;            // dvae, pretrain or finetune
    std::size_t epoch = 0;       // completed epochs
    std::string dtype = "float"; // storage precision of every tensor
    Config config;
    ParameterSet<double> params;
    std::size_t optimizer_steps = 0;
    Bindings<double> first_moments, second_moments;
};

namespace impl {

class Writer {
public:
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(const std::string& s) { buf_.append(s); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }
    const std::string& data() const { return buf_; }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4))); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string bytes(std::uint64_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() { return bytes(u32()); }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > data_.size() - pos_) throw FormatError(what_ + ": truncated");
    }
    std::uint64_t get(int n) {
        need(static_cast<std::uint64_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += n;
        return v;
    }
    const std::string& data_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::string encode_table(const Bindings<double>& table, const std::string& dtype) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [name, t] : table) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) w.u64(e);
        for (double v : t.data()) {
            if (dtype == "float") {
                w.f32(static_cast<float>(v));
            } else {
                w.f64(v);
            }
        }
    }
    return w.data();
}

inline Bindings<double> decode_table(const std::string& payload, const std::string& dtype, const std::string& what) {
    Reader r(payload, what);
    Bindings<double> out;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const auto rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError(what + ": bad rank for '" + name + "'");
        Shape shape(rank);
        std::uint64_t total = 1;
        for (auto& e : shape) {
            e = r.u64();
            if (e == 0 || total > (std::uint64_t(1) << 40) / e) throw FormatError(what + ": bad extent for '" + name + "'");
            total *= e;
        }
        Tensor<double> t(shape);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = dtype == "float" ? static_cast<double>(r.f32()) : r.f64();
        if (!out.emplace(name, std::move(t)).second) throw FormatError(what + ": duplicate tensor '" + name + "'");
    }
    if (!r.done()) throw FormatError(what + ": trailing bytes");
    return out;
}

} // namespace impl

inline std::string serialize(const Checkpoint& ck) {
    if (ck.dtype != "float" && ck.dtype != "double") throw ArgumentError("checkpoint dtype must be float or double");
    std::ostringstream meta;
    meta << "kind=" << ck.kind << "\nepoch=" << ck.epoch << "\ndtype=" << ck.dtype
         << "\noptimizer_steps=" << ck.optimizer_steps << "\n";
    const std::vector<std::pair<std::string, std::string>> sections{
        {"meta", meta.str()},
        {"config", to_text(ck.config)},
        {"params", impl::encode_table(ck.params, ck.dtype)},
        {"adam.m", impl::encode_table(ck.first_moments, ck.dtype)},
        {"adam.v", impl::encode_table(ck.second_moments, ck.dtype)},
    };
    impl::Writer w;
    w.bytes(std::string(kCheckpointMagic, 8));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        w.str(name);
        w.u64(payload.size());
        w.bytes(payload);
    }
    return w.data();
}

inline Checkpoint deserialize(const std::string& data, const std::string& what = "checkpoint") {
    impl::Reader r(data, what);
    if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError(what + ": bad magic");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
    std::map<std::string, std::string> sections;
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const auto len = r.u64();
        sections[name] = r.bytes(len);
    }
    if (!r.done()) throw FormatError(what + ": trailing bytes");
    for (const char* required : {"meta", "config", "params", "adam.m", "adam.v"}) {
        if (!sections.count(required)) throw FormatError(what + ": missing section '" + std::string(required) + "'");
    }

    Checkpoint ck;
    std::istringstream meta(sections["meta"]);
    std::map<std::string, std::string> kv;
    for (std::string line; std::getline(meta, line);) {
        if (line.empty()) continue;
        auto [k, v] = split_assignment(line);
        kv[k] = v;
    }
    for (const char* key : {"kind", "epoch", "dtype", "optimizer_steps"}) {
        if (!kv.count(key)) throw FormatError(what + ": meta lacks '" + std::string(key) + "'");
    }
    ck.kind = kv["kind"];
    ck.dtype = kv["dtype"];
    if (ck.dtype != "float" && ck.dtype != "double") throw FormatError(what + ": unknown dtype '" + ck.dtype + "'");
    try {
        ck.epoch = impl::parse_number<std::size_t>("epoch", kv["epoch"]);
        ck.optimizer_steps = impl::parse_number<std::size_t>("optimizer_steps", kv["optimizer_steps"]);
        ck.config = parse_config(sections["config"]);
    } catch (const ConfigError& e) {
        throw FormatError(what + ": " + e.what());
    }
    ck.params = impl::decode_table(sections["params"], ck.dtype, what + " params");
    ck.first_moments = impl::decode_table(sections["adam.m"], ck.dtype, what + " adam.m");
    ck.second_moments = impl::decode_table(sections["adam.v"], ck.dtype, what + " adam.v");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const std::string bytes = serialize(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str(), path.string());
}

/// Fails loudly when the checkpoint was produced under a different
/// architecture than `run`.
inline void require_compatible(const Checkpoint& ck, const Config& run) {
    const auto diffs = architecture_mismatches(ck.config, run);
    if (diffs.empty()) return;
    std::string msg = "checkpoint architecture differs from the run config:";
    for (const auto& d : diffs) msg += " " + d;
    throw ConfigError(msg);
}

template <typename T>
Checkpoint make_checkpoint(const std::string& kind, std::size_t epoch, const Config& cfg, const ParameterSet<T>& params,
                           const AdamW<T>* opt = nullptr) {
    Checkpoint ck;
    ck.kind = kind;
    ck.epoch = epoch;
    ck.dtype = std::is_same_v<T, float> ? "float" : "double";
    ck.config = cfg;
    ck.params = cast_params<double>(params);
    if (opt) {
        ck.optimizer_steps = opt->steps();
        ck.first_moments = cast_params<double>(opt->first_moments());
        ck.second_moments = cast_params<double>(opt->second_moments());
    }
    return ck;
}

} // namespace pointmpm::harness
