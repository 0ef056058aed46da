#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/geometry.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/imaging.hpp"
#include "heliocast/randomfield.hpp"
#include "heliocast/series.hpp"
#include "heliocast/time.hpp"

namespace heliocast {

enum class Weather { clear, overcast, broken };

inline std::string to_string(Weather w) {
    switch (w) {
        case Weather::clear: return "clear";
        case Weather::overcast: return "overcast";
        case Weather::broken: return "broken";
    }
    throw DomainError("unknown weather class");
}

inline Weather weather_from_string(const std::string& s) {
    if (s == "clear") return Weather::clear;
    if (s == "overcast") return Weather::overcast;
    if (s == "broken") return Weather::broken;
    throw DomainError("unknown weather class: " + s);
}

struct SiteSpec {
    double latitude_deg = 48.713;
    double longitude_deg = 2.208;
};

struct DaySpec {
    std::int64_t start_ts = 0; // UTC midnight opening the day
    Weather regime = Weather::clear;
    std::pair<double, double> velocity_mps{8.0, 3.0}; // cloud drift (east, north)
    double growth_per_hour = 0.0;                     // opacity drift over the day
};

struct SceneSpec {
    std::uint64_t seed = 1;
    SiteSpec site;
    int sat_resolution = 64;
    double sat_extent_m = 40000.0; // ground meters spanned by a satellite frame
    int sat_cadence_s = 300;
    int sky_resolution = 64; // raw fisheye frame side
    int sky_cadence_s = 120;
    int irr_cadence_s = 60;
    double lens_max_zenith_deg = 78.0;
    double cloud_height_m = 2000.0;
    double cloud_corr_m = 8000.0;
    double cloud_sigma = 1.0;
    double albedo_mean = 0.2;
    double albedo_sigma = 0.04; // 0 renders a uniform ground
    double albedo_corr_m = 12000.0;
    double attenuation_k = 0.75;
    double cloud_albedo = 0.9;       // satellite brightness of an opaque cloud
    double cloud_sky_albedo = 0.85;  // sky brightness of an opaque cloud
    double max_render_zenith_deg = 85.0; // frames are emitted only below this
    std::vector<DaySpec> days;

    void validate() const {
        if (days.empty()) throw ConfigError("scene has no days");
        if (sat_resolution < 8 || sky_resolution < 8)
            throw ConfigError("frame resolutions must be at least 8");
        if (!(sat_extent_m > 0.0)) throw ConfigError("satellite extent must be positive");
        if (sat_cadence_s <= 0 || sky_cadence_s <= 0 || irr_cadence_s <= 0)
            throw ConfigError("cadences must be positive");
        if (86400 % sat_cadence_s != 0 || 86400 % sky_cadence_s != 0 || 60 % irr_cadence_s != 0)
            throw ConfigError("cadences must divide the day (and the minute for irradiance)");
        if (!(lens_max_zenith_deg > 10.0 && lens_max_zenith_deg < 90.0))
            throw ConfigError("lens max zenith must lie in (10, 90)");
        if (!(cloud_height_m > 0.0)) throw ConfigError("cloud height must be positive");
        if (!(cloud_corr_m > 0.0)) throw ConfigError("cloud correlation length must be positive");
        if (!(cloud_sigma > 0.0)) throw ConfigError("cloud sigma must be positive");
        if (albedo_sigma < 0.0) throw ConfigError("albedo sigma must be non-negative");
        if (!(albedo_mean >= 0.05 && albedo_mean <= 0.35))
            throw ConfigError("albedo mean must lie in [0.05, 0.35]");
        if (!(attenuation_k > 0.0 && attenuation_k <= 1.0))
            throw ConfigError("attenuation must lie in (0, 1]");
        if (!(max_render_zenith_deg > 0.0 && max_render_zenith_deg < 90.0))
            throw ConfigError("render zenith cap must lie in (0, 90)");
        std::int64_t prev = -1;
        for (const auto& d : days) {
            if (d.start_ts % 86400 != 0) throw ConfigError("day start must be a UTC midnight");
            if (d.start_ts <= prev) throw ConfigError("days must be sorted and unique");
            prev = d.start_ts;
        }
    }
};

/// Deterministic synthetic scene: a static ground albedo field plus one
/// advecting cloud-opacity field per day.  All observables evaluate
/// analytically at continuous coordinates and times, so the same cloud is
/// seen consistently by the satellite view, the fisheye sky view and the
/// irradiance sensor.
class Scene {
public:
    explicit Scene(SceneSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        if (spec_.albedo_sigma > 0.0)
            albedo_field_ = ModeSumField(mix(spec_.seed, 0x5eedA1BEDull), spec_.albedo_corr_m,
                                         spec_.albedo_sigma);
        day_fields_.reserve(spec_.days.size());
        for (std::size_t i = 0; i < spec_.days.size(); ++i)
            day_fields_.emplace_back(mix(spec_.seed, 0xC10Dull + i), spec_.cloud_corr_m,
                                     spec_.cloud_sigma);

        // Equal-area fisheye lens r = 2 f sin(theta/2), tabulated at one
        // degree steps; the table itself is the calibration of record.
        const double theta_max = spec_.lens_max_zenith_deg * kDegToRad;
        const double f = 0.48 * spec_.sky_resolution / (2.0 * std::sin(theta_max / 2.0));
        cal_.center_x = (spec_.sky_resolution - 1) / 2.0;
        cal_.center_y = (spec_.sky_resolution - 1) / 2.0;
        cal_.assumed_cloud_height_m = spec_.cloud_height_m;
        const int knots = static_cast<int>(std::ceil(spec_.lens_max_zenith_deg));
        for (int k = 1; k <= knots; ++k) {
            const double zen = std::min(static_cast<double>(k), spec_.lens_max_zenith_deg);
            cal_.radius_per_zenith.emplace_back(zen, 2.0 * f * std::sin(zen * kDegToRad / 2.0));
        }
        cal_.validate();
    }

    const SceneSpec& spec() const { return spec_; }
    const FisheyeCalibration& calibration() const { return cal_; }

    const DaySpec& day_for(std::int64_t t) const {
        for (std::size_t i = 0; i < spec_.days.size(); ++i)
            if (t >= spec_.days[i].start_ts && t < spec_.days[i].start_ts + 86400)
                return spec_.days[i];
        throw DomainError("time outside the simulated range: " + format_iso8601(t));
    }

    std::pair<std::int64_t, std::int64_t> time_range() const {
        return {spec_.days.front().start_ts, spec_.days.back().start_ts + 86400};
    }

    double albedo(double x_east, double y_north) const {
        const double base =
            spec_.albedo_mean + (albedo_field_.empty() ? 0.0 : albedo_field_(x_east, y_north));
        return std::clamp(base, 0.05, 0.35);
    }

    /// Cloud optical opacity at a ground-projected point, in [0, 1].
    double cloud_opacity(double x_east, double y_north, std::int64_t t) const {
        const DaySpec& day = day_for(t);
        if (day.regime == Weather::clear) return 0.0;
        const std::size_t di = static_cast<std::size_t>(&day - spec_.days.data());
        const double dt = static_cast<double>(t - day.start_ts);
        const double fx = x_east - day.velocity_mps.first * dt;
        const double fy = y_north - day.velocity_mps.second * dt;
        const double f = day_fields_[di](fx, fy) / spec_.cloud_sigma;
        double tau;
        if (day.regime == Weather::overcast) {
            tau = 0.85 + 0.10 * std::tanh(f);
        } else {
            const double s = std::clamp((f + 0.1) / 0.8, 0.0, 1.0);
            tau = s * s * (3.0 - 2.0 * s);
        }
        tau += day.growth_per_hour * dt / 3600.0;
        return std::clamp(tau, 0.0, 1.0);
    }

    SolarPosition sun(std::int64_t t) const {
        return solar_position(spec_.site.latitude_deg, spec_.site.longitude_deg, t);
    }

    /// Opacity along the sun ray, evaluated on the cloud layer.
    double sun_opacity(std::int64_t t) const {
        const SolarPosition pos = sun(t);
        if (pos.zenith_deg >= 90.0) return 0.0;
        const double zen = std::min(pos.zenith_deg, 89.0) * kDegToRad;
        const double rho = spec_.cloud_height_m * std::tan(zen);
        const double az = pos.azimuth_deg * kDegToRad;
        return cloud_opacity(rho * std::sin(az), rho * std::cos(az), t);
    }

    /// Top-down reflectance frame: ground albedo blended toward the cloud
    /// albedo by the opacity.
    Grid2D render_satellite(std::int64_t t) const {
        Grid2D out(spec_.sat_resolution, spec_.sat_resolution, 1);
        out.value_range = {0.0f, 1.0f};
        const int n = spec_.sat_resolution;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double x = ((j + 0.5) / n - 0.5) * spec_.sat_extent_m;
                const double y = (0.5 - (i + 0.5) / n) * spec_.sat_extent_m;
                const double tau = cloud_opacity(x, y, t);
                out.at(0, i, j) =
                    static_cast<float>(albedo(x, y) * (1.0 - tau) + spec_.cloud_albedo * tau);
            }
        return out;
    }

    /// Fisheye sky frame: per pixel the view ray meets the cloud layer and
    /// blends a diurnal sky brightness toward the cloud's brightness, plus a
    /// Gaussian sun glare where neither the pixel nor the sun ray is
    /// occluded.  Pixels beyond the lens radius are masked.
    Grid2D render_sky(std::int64_t t) const {
        const SolarPosition pos = sun(t);
        const double cz = std::cos(pos.zenith_deg * kDegToRad);
        const double base = 0.15 + 0.45 * std::max(0.0, cz);
        const double sun_vis = pos.zenith_deg < 90.0 ? 1.0 - sun_opacity(t) : 0.0;
        const double zen_sun = pos.zenith_deg * kDegToRad;
        const double az_sun = pos.azimuth_deg * kDegToRad;
        const double glare_width = 5.0 * kDegToRad;

        const int n = spec_.sky_resolution;
        Grid2D out(n, n, 1);
        out.value_range = {0.0f, 1.0f};
        out.ensure_mask();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double dx = j - cal_.center_x;
                const double dy = i - cal_.center_y;
                const double r = std::hypot(dx, dy);
                if (r > cal_.max_radius_px()) {
                    out.set_valid(i, j, false);
                    continue;
                }
                const double zen = cal_.zenith_for_radius(r) * kDegToRad;
                const double az = std::atan2(dx, -dy);
                const double rho = spec_.cloud_height_m * std::tan(zen);
                const double tau = cloud_opacity(rho * std::sin(az), rho * std::cos(az), t);

                const double cos_sep = std::cos(zen) * std::cos(zen_sun) +
                                       std::sin(zen) * std::sin(zen_sun) * std::cos(az - az_sun);
                const double sep = std::acos(std::clamp(cos_sep, -1.0, 1.0));
                const double glare =
                    0.35 * sun_vis * std::exp(-(sep / glare_width) * (sep / glare_width));
                const double v =
                    (base + glare) * (1.0 - tau) + spec_.cloud_sky_albedo * tau;
                out.at(0, i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        return out;
    }

    double clear_irradiance(std::int64_t t) const { return clear_sky_ghi(sun(t)); }

    /// Instantaneous GHI: the clear-sky value attenuated by the opacity along
    /// the sun ray.
    double irradiance(std::int64_t t) const {
        const double clear = clear_irradiance(t);
        if (clear <= 0.0) return 0.0;
        return clear * (1.0 - spec_.attenuation_k * sun_opacity(t));
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
        // splitmix64 finalizer over seed ^ salt.
        std::uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    SceneSpec spec_;
    FisheyeCalibration cal_;
    ModeSumField albedo_field_;
    std::vector<ModeSumField> day_fields_;
};

struct SimulationSummary {
    long sat_frames = 0;
    long sky_frames = 0;
    long irradiance_rows = 0;
};

/// Renders a scene to disk: per-frame rasters named "<stream>_<unix>.fgrid",
/// a minute-averaged irradiance CSV with the matching clear-sky column, and
/// the lens calibration (written by the caller, which owns the JSON layer).
/// Frames are emitted only while the solar zenith is below the render cap.
inline SimulationSummary simulate_streams(const Scene& scene, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const SceneSpec& spec = scene.spec();
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/sat");
    fs::create_directories(out_dir + "/sky");

    SimulationSummary sum;
    IrradianceSeries irr;
    for (const auto& day : spec.days) {
        for (std::int64_t t = day.start_ts; t < day.start_ts + 86400; t += spec.sat_cadence_s)
            if (scene.sun(t).zenith_deg <= spec.max_render_zenith_deg) {
                save_fgrid(out_dir + "/sat/sat_" + std::to_string(t) + ".fgrid",
                           scene.render_satellite(t));
                ++sum.sat_frames;
            }
        for (std::int64_t t = day.start_ts; t < day.start_ts + 86400; t += spec.sky_cadence_s)
            if (scene.sun(t).zenith_deg <= spec.max_render_zenith_deg) {
                save_fgrid(out_dir + "/sky/sky_" + std::to_string(t) + ".fgrid",
                           scene.render_sky(t));
                ++sum.sky_frames;
            }
        // Minute rows stamped at the interval end, averaging instantaneous
        // samples on the irradiance cadence within (t-60, t].
        const int sub = 60 / spec.irr_cadence_s;
        for (std::int64_t tmin = day.start_ts + 60; tmin <= day.start_ts + 86400; tmin += 60) {
            double g = 0.0, gc = 0.0;
            for (int k = 0; k < sub; ++k) {
                const std::int64_t ts = tmin - k * spec.irr_cadence_s;
                g += scene.irradiance(ts);
                gc += scene.clear_irradiance(ts);
            }
            irr.push(tmin, g / sub, gc / sub);
            ++sum.irradiance_rows;
        }
    }
    write_irradiance_csv(out_dir + "/irradiance.csv", irr);
    return sum;
}

} // namespace heliocast
