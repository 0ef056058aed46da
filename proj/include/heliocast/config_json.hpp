#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "heliocast/error.hpp"
#include "heliocast/imaging.hpp"
#include "heliocast/model.hpp"

namespace heliocast {

using json = nlohmann::json;

/// Fail-fast schema check: every required key present, nothing outside
/// required + optional accepted.
inline void check_keys(const json& j, const std::string& ctx,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional = {}) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
    for (const char* k : required)
        if (!j.contains(k)) throw ConfigError(ctx + ": missing key '" + k + "'");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : required) known = known || key == k;
        for (const char* k : optional) known = known || key == k;
        if (!known) throw ConfigError(ctx + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_as(const json& j, const std::string& ctx, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(ctx + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const std::string& ctx, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return get_as<T>(j, ctx, key);
}

inline json model_config_to_json(const ModelConfig& cfg) {
    return json{{"input_resolution", cfg.input_resolution},
                {"encoder_channels", cfg.encoder_channels},
                {"latent_channels", cfg.latent_channels},
                {"horizons", cfg.horizons},
                {"horizon_step_s", cfg.horizon_step_s},
                {"frames", cfg.frames},
                {"bin_count", cfg.bin_count},
                {"heads",
                 {{"cloud_map", cfg.head_cloud_map},
                  {"scalar", cfg.head_scalar},
                  {"distribution", cfg.head_distribution}}},
                {"inputs",
                 {{"sky", cfg.input_sky}, {"sat", cfg.input_sat}, {"ic", cfg.input_ic}}},
                {"alpha", cfg.alpha},
                {"image_loss", cfg.image_loss},
                {"seed", cfg.seed},
                {"bin_lo", cfg.bin_lo},
                {"bin_hi", cfg.bin_hi}};
}

inline ModelConfig model_config_from_json(const json& j, const std::string& ctx = "model") {
    check_keys(j, ctx, {},
               {"input_resolution", "encoder_channels", "latent_channels", "horizons",
                "horizon_step_s", "frames", "bin_count", "heads", "inputs", "alpha", "image_loss",
                "seed", "bin_lo", "bin_hi"});
    ModelConfig cfg;
    cfg.input_resolution = get_or(j, ctx, "input_resolution", cfg.input_resolution);
    cfg.encoder_channels = get_or(j, ctx, "encoder_channels", cfg.encoder_channels);
    cfg.latent_channels = get_or(j, ctx, "latent_channels", cfg.latent_channels);
    cfg.horizons = get_or(j, ctx, "horizons", cfg.horizons);
    cfg.horizon_step_s = get_or(j, ctx, "horizon_step_s", cfg.horizon_step_s);
    cfg.frames = get_or(j, ctx, "frames", cfg.frames);
    cfg.bin_count = get_or(j, ctx, "bin_count", cfg.bin_count);
    if (j.contains("heads")) {
        const json& h = j.at("heads");
        check_keys(h, ctx + ".heads", {}, {"cloud_map", "scalar", "distribution"});
        cfg.head_cloud_map = get_or(h, ctx, "cloud_map", cfg.head_cloud_map);
        cfg.head_scalar = get_or(h, ctx, "scalar", cfg.head_scalar);
        cfg.head_distribution = get_or(h, ctx, "distribution", cfg.head_distribution);
    }
    if (j.contains("inputs")) {
        const json& i = j.at("inputs");
        check_keys(i, ctx + ".inputs", {}, {"sky", "sat", "ic"});
        cfg.input_sky = get_or(i, ctx, "sky", cfg.input_sky);
        cfg.input_sat = get_or(i, ctx, "sat", cfg.input_sat);
        cfg.input_ic = get_or(i, ctx, "ic", cfg.input_ic);
    }
    cfg.alpha = get_or(j, ctx, "alpha", cfg.alpha);
    cfg.image_loss = get_or(j, ctx, "image_loss", cfg.image_loss);
    cfg.seed = get_or(j, ctx, "seed", cfg.seed);
    cfg.bin_lo = get_or(j, ctx, "bin_lo", cfg.bin_lo);
    cfg.bin_hi = get_or(j, ctx, "bin_hi", cfg.bin_hi);
    cfg.validate();
    return cfg;
}

inline json calibration_to_json(const FisheyeCalibration& cal) {
    json table = json::array();
    for (const auto& [zen, rad] : cal.radius_per_zenith) table.push_back({zen, rad});
    return json{{"center_x", cal.center_x},
                {"center_y", cal.center_y},
                {"radius_per_zenith", table},
                {"assumed_cloud_height_m", cal.assumed_cloud_height_m}};
}

inline FisheyeCalibration calibration_from_json(const json& j,
                                                const std::string& ctx = "calibration") {
    check_keys(j, ctx, {"center_x", "center_y", "radius_per_zenith", "assumed_cloud_height_m"});
    FisheyeCalibration cal;
    cal.center_x = get_as<double>(j, ctx, "center_x");
    cal.center_y = get_as<double>(j, ctx, "center_y");
    cal.assumed_cloud_height_m = get_as<double>(j, ctx, "assumed_cloud_height_m");
    for (const auto& knot : j.at("radius_per_zenith")) {
        if (!knot.is_array() || knot.size() != 2)
            throw ConfigError(ctx + ": table knots must be [zenith_deg, radius_px] pairs");
        cal.radius_per_zenith.emplace_back(knot[0].get<double>(), knot[1].get<double>());
    }
    cal.validate();
    return cal;
}

inline json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void save_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw DataError("short write: " + path);
}

} // namespace heliocast
