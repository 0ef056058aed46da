#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include "heliocast/config_json.hpp"
#include "heliocast/error.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/model.hpp"

namespace heliocast {

/// Trained model container: the final parameters plus one snapshot per
/// horizon at its best validation epoch, with the configuration (including
/// the dataset bin range) embedded.
struct Checkpoint {
    ModelConfig config;
    std::map<std::string, ParameterStore> groups; // "final", "h600", "h1200", ...
    std::map<int, int> best_epoch;                // horizon_s -> epoch index

    const ParameterStore& params_for(int horizon_s, bool best_per_horizon) const {
        if (best_per_horizon) {
            const auto it = groups.find("h" + std::to_string(horizon_s));
            if (it != groups.end()) return it->second;
        }
        const auto fin = groups.find("final");
        if (fin == groups.end()) throw DataError("checkpoint has no final parameter group");
        return fin->second;
    }
};

/// File layout: "HCPT" magic, u32 version, u32 JSON length + bytes (config,
/// best-epoch map, group names), u32 tensor count, then per tensor a
/// length-prefixed name, u32 rank, u32 dims, and float32 little-endian data.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write("HCPT", 4);
    detail::write_u32(os, 1u);

    json meta;
    meta["model"] = model_config_to_json(ck.config);
    json be = json::object();
    for (const auto& [h, e] : ck.best_epoch) be[std::to_string(h)] = e;
    meta["best_epoch"] = be;
    const std::string mjson = meta.dump();
    detail::write_u32(os, static_cast<std::uint32_t>(mjson.size()));
    os.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));

    std::uint32_t count = 0;
    for (const auto& [g, ps] : ck.groups) count += static_cast<std::uint32_t>(ps.entries.size());
    detail::write_u32(os, count);
    for (const auto& [g, ps] : ck.groups)
        for (const auto& e : ps.entries) {
            const std::string name = g + "/" + e.name;
            detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::write_u32(os, static_cast<std::uint32_t>(e.t.shape.size()));
            for (int d : e.t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
            for (double v : e.t.v) {
                const float f = static_cast<float>(v);
                detail::write_f32_block(os, &f, 1);
            }
        }
    if (!os) throw DataError("short write while saving checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "HCPT", 4) != 0) throw DataError("bad checkpoint magic");
    if (detail::read_u32(is) != 1u) throw DataError("unsupported checkpoint version");

    const std::uint32_t jlen = detail::read_u32(is);
    if (jlen > (1u << 24)) throw DataError("implausible checkpoint metadata size");
    std::string mjson(jlen, '\0');
    is.read(mjson.data(), static_cast<std::streamsize>(jlen));
    if (!is) throw DataError("truncated checkpoint metadata");
    json meta;
    try {
        meta = json::parse(mjson);
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt checkpoint metadata: ") + e.what());
    }

    Checkpoint ck;
    ck.config = model_config_from_json(meta.at("model"), "checkpoint.model");
    if (meta.contains("best_epoch"))
        for (const auto& [k, v] : meta.at("best_epoch").items())
            ck.best_epoch[std::stoi(k)] = v.get<int>();

    const std::uint32_t count = detail::read_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t nlen = detail::read_u32(is);
        if (nlen == 0 || nlen > 4096) throw DataError("bad checkpoint tensor name");
        std::string full(nlen, '\0');
        is.read(full.data(), static_cast<std::streamsize>(nlen));
        const std::uint32_t rank = detail::read_u32(is);
        if (rank == 0 || rank > 8) throw DataError("bad checkpoint tensor rank");
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(detail::read_u32(is));
        nn::Tensor t(shape);
        for (double& v : t.v) {
            float f = 0.0f;
            detail::read_f32_block(is, &f, 1);
            v = static_cast<double>(f);
        }
        if (!is) throw DataError("truncated checkpoint tensor: " + full);
        const auto slash = full.find('/');
        if (slash == std::string::npos) throw DataError("tensor name lacks a group: " + full);
        ck.groups[full.substr(0, slash)].add(full.substr(slash + 1), std::move(t));
    }
    return ck;
}

} // namespace heliocast
