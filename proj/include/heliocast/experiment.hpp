#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "heliocast/baselines.hpp"
#include "heliocast/checkpoint.hpp"
#include "heliocast/cloudindex.hpp"
#include "heliocast/config_json.hpp"
#include "heliocast/dataset.hpp"
#include "heliocast/error.hpp"
#include "heliocast/imaging.hpp"
#include "heliocast/metrics.hpp"
#include "heliocast/model.hpp"
#include "heliocast/simulator.hpp"
#include "heliocast/train.hpp"

namespace heliocast {

// ---- small config helpers ----

/// Parses "YYYY-MM-DD" to the UTC midnight opening that day.
inline std::int64_t parse_date(const std::string& s) {
    return parse_iso8601(s + "T00:00:00Z");
}

inline std::string format_date(std::int64_t midnight_ts) {
    return format_iso8601(midnight_ts).substr(0, 10);
}

// ---- scene configuration ----

/// Schema: site/satellite/sky/cloud/albedo blocks are optional and fall back
/// to the scene defaults; day_blocks is required and expands to consecutive
/// simulated days.
inline SceneSpec scene_from_json(const json& j) {
    const std::string ctx = "scene";
    check_keys(j, ctx, {"day_blocks"},
               {"seed", "site", "satellite", "sky", "irradiance_cadence_s", "cloud", "albedo",
                "max_render_zenith_deg"});
    SceneSpec spec;
    spec.seed = get_or<std::uint64_t>(j, ctx, "seed", spec.seed);
    if (j.contains("site")) {
        const json& s = j.at("site");
        check_keys(s, ctx + ".site", {"latitude_deg", "longitude_deg"});
        spec.site.latitude_deg = get_as<double>(s, ctx, "latitude_deg");
        spec.site.longitude_deg = get_as<double>(s, ctx, "longitude_deg");
    }
    if (j.contains("satellite")) {
        const json& s = j.at("satellite");
        check_keys(s, ctx + ".satellite", {}, {"resolution", "extent_m", "cadence_s"});
        spec.sat_resolution = get_or(s, ctx, "resolution", spec.sat_resolution);
        spec.sat_extent_m = get_or(s, ctx, "extent_m", spec.sat_extent_m);
        spec.sat_cadence_s = get_or(s, ctx, "cadence_s", spec.sat_cadence_s);
    }
    if (j.contains("sky")) {
        const json& s = j.at("sky");
        check_keys(s, ctx + ".sky", {}, {"resolution", "cadence_s", "lens_max_zenith_deg"});
        spec.sky_resolution = get_or(s, ctx, "resolution", spec.sky_resolution);
        spec.sky_cadence_s = get_or(s, ctx, "cadence_s", spec.sky_cadence_s);
        spec.lens_max_zenith_deg = get_or(s, ctx, "lens_max_zenith_deg", spec.lens_max_zenith_deg);
    }
    spec.irr_cadence_s = get_or(j, ctx, "irradiance_cadence_s", spec.irr_cadence_s);
    if (j.contains("cloud")) {
        const json& c = j.at("cloud");
        check_keys(c, ctx + ".cloud", {},
                   {"height_m", "correlation_m", "sigma", "albedo", "sky_albedo", "attenuation_k"});
        spec.cloud_height_m = get_or(c, ctx, "height_m", spec.cloud_height_m);
        spec.cloud_corr_m = get_or(c, ctx, "correlation_m", spec.cloud_corr_m);
        spec.cloud_sigma = get_or(c, ctx, "sigma", spec.cloud_sigma);
        spec.cloud_albedo = get_or(c, ctx, "albedo", spec.cloud_albedo);
        spec.cloud_sky_albedo = get_or(c, ctx, "sky_albedo", spec.cloud_sky_albedo);
        spec.attenuation_k = get_or(c, ctx, "attenuation_k", spec.attenuation_k);
    }
    if (j.contains("albedo")) {
        const json& a = j.at("albedo");
        check_keys(a, ctx + ".albedo", {}, {"mean", "sigma", "correlation_m"});
        spec.albedo_mean = get_or(a, ctx, "mean", spec.albedo_mean);
        spec.albedo_sigma = get_or(a, ctx, "sigma", spec.albedo_sigma);
        spec.albedo_corr_m = get_or(a, ctx, "correlation_m", spec.albedo_corr_m);
    }
    spec.max_render_zenith_deg =
        get_or(j, ctx, "max_render_zenith_deg", spec.max_render_zenith_deg);

    for (const json& b : j.at("day_blocks")) {
        check_keys(b, ctx + ".day_blocks[]", {"start_date", "count", "regime"},
                   {"velocity_mps", "growth_per_hour"});
        const int count = get_as<int>(b, ctx, "count");
        if (count < 1) throw ConfigError(ctx + ": day block must cover at least one day");
        DaySpec proto;
        proto.regime = weather_from_string(get_as<std::string>(b, ctx, "regime"));
        if (b.contains("velocity_mps")) {
            const auto v = get_as<std::vector<double>>(b, ctx, "velocity_mps");
            if (v.size() != 2) throw ConfigError(ctx + ": velocity_mps must be [east, north]");
            proto.velocity_mps = {v[0], v[1]};
        }
        proto.growth_per_hour = get_or(b, ctx, "growth_per_hour", proto.growth_per_hour);
        const std::int64_t start = parse_date(get_as<std::string>(b, ctx, "start_date"));
        for (int i = 0; i < count; ++i) {
            DaySpec d = proto;
            d.start_ts = start + static_cast<std::int64_t>(i) * 86400;
            spec.days.push_back(d);
        }
    }
    spec.validate();
    return spec;
}

inline json scene_to_json(const SceneSpec& spec) {
    json days = json::array();
    for (const auto& d : spec.days)
        days.push_back({{"date", format_date(d.start_ts)},
                        {"regime", to_string(d.regime)},
                        {"velocity_mps", {d.velocity_mps.first, d.velocity_mps.second}},
                        {"growth_per_hour", d.growth_per_hour}});
    return json{
        {"seed", spec.seed},
        {"site",
         {{"latitude_deg", spec.site.latitude_deg}, {"longitude_deg", spec.site.longitude_deg}}},
        {"satellite",
         {{"resolution", spec.sat_resolution},
          {"extent_m", spec.sat_extent_m},
          {"cadence_s", spec.sat_cadence_s}}},
        {"sky",
         {{"resolution", spec.sky_resolution},
          {"cadence_s", spec.sky_cadence_s},
          {"lens_max_zenith_deg", spec.lens_max_zenith_deg}}},
        {"irradiance_cadence_s", spec.irr_cadence_s},
        {"cloud",
         {{"height_m", spec.cloud_height_m},
          {"correlation_m", spec.cloud_corr_m},
          {"sigma", spec.cloud_sigma},
          {"albedo", spec.cloud_albedo},
          {"sky_albedo", spec.cloud_sky_albedo},
          {"attenuation_k", spec.attenuation_k}}},
        {"albedo",
         {{"mean", spec.albedo_mean},
          {"sigma", spec.albedo_sigma},
          {"correlation_m", spec.albedo_corr_m}}},
        {"max_render_zenith_deg", spec.max_render_zenith_deg},
        {"days", days}};
}

// ---- simulate ----

/// Renders a scene to the raw dataset layout: frame streams, the irradiance
/// CSV, the lens calibration, and a manifest recording the resolved scene
/// plus an after-the-fact weather classification of every simulated day.
inline void cmd_simulate(const std::string& config_path, const std::string& out_dir,
                         std::optional<std::uint64_t> seed_override = std::nullopt) {
    json j = load_json_file(config_path);
    SceneSpec spec = scene_from_json(j);
    if (seed_override) spec.seed = *seed_override;
    Scene scene(spec);

    const SimulationSummary sum = simulate_streams(scene, out_dir);
    save_json_file(out_dir + "/calibration.json", calibration_to_json(scene.calibration()));

    // Classify each day from its emitted irradiance trace, the same check an
    // operator would run on measured data.
    const IrradianceSeries irr = read_irradiance_csv(out_dir + "/irradiance.csv");
    json days = json::array();
    for (const auto& d : spec.days) {
        std::vector<double> g, gc;
        for (std::size_t i = 0; i < irr.ts.size(); ++i)
            if (irr.ts[i] > d.start_ts && irr.ts[i] <= d.start_ts + 86400) {
                g.push_back(irr.ghi[i]);
                gc.push_back(irr.ghi_clear[i]);
            }
        days.push_back({{"date", format_date(d.start_ts)},
                        {"regime", to_string(d.regime)},
                        {"classified", to_string(classify_day(g, gc))}});
    }

    json manifest{{"seed", spec.seed},
                  {"scene", scene_to_json(spec)},
                  {"summary",
                   {{"sat_frames", sum.sat_frames},
                    {"sky_frames", sum.sky_frames},
                    {"irradiance_rows", sum.irradiance_rows}}},
                  {"days", days}};
    save_json_file(out_dir + "/manifest.json", manifest);
}

// ---- preprocess ----

struct PreprocessConfig {
    std::string raw_dir;
    std::string sky_variant = "raw"; // raw | closeup | spin
    std::string sat_variant = "raw"; // raw | closeup
    int sky_resolution = 64;         // undistorted output side
    double max_zenith_deg = -1.0;    // default: full calibrated range
    int history_days = 10;
    AssembleConfig assemble;
    SplitSpec split_spec;
    bool emit_shards = false;

    void validate() const {
        if (raw_dir.empty()) throw ConfigError("preprocess: raw_dir is required");
        if (sky_variant != "raw" && sky_variant != "closeup" && sky_variant != "spin")
            throw ConfigError("preprocess: sky variant must be raw, closeup or spin");
        if (sat_variant != "raw" && sat_variant != "closeup")
            throw ConfigError("preprocess: satellite variant must be raw or closeup");
        if (history_days < 1) throw ConfigError("preprocess: history needs at least one day");
        assemble.validate();
        split_spec.validate();
    }
};

inline PreprocessConfig preprocess_config_from_json(const json& j) {
    const std::string ctx = "preprocess";
    check_keys(j, ctx, {"raw_dir"}, {"sky", "sat", "history_days", "assemble", "split",
                                     "emit_shards"});
    PreprocessConfig cfg;
    cfg.raw_dir = get_as<std::string>(j, ctx, "raw_dir");
    if (j.contains("sky")) {
        const json& s = j.at("sky");
        check_keys(s, ctx + ".sky", {}, {"variant", "resolution", "max_zenith_deg"});
        cfg.sky_variant = get_or(s, ctx, "variant", cfg.sky_variant);
        cfg.sky_resolution = get_or(s, ctx, "resolution", cfg.sky_resolution);
        cfg.max_zenith_deg = get_or(s, ctx, "max_zenith_deg", cfg.max_zenith_deg);
    }
    if (j.contains("sat")) {
        const json& s = j.at("sat");
        check_keys(s, ctx + ".sat", {}, {"variant"});
        cfg.sat_variant = get_or(s, ctx, "variant", cfg.sat_variant);
    }
    cfg.history_days = get_or(j, ctx, "history_days", cfg.history_days);
    if (j.contains("assemble")) {
        const json& a = j.at("assemble");
        check_keys(a, ctx + ".assemble", {},
                   {"horizons_s", "frames", "sky_spacing_s", "sat_spacing_s", "sample_stride_s",
                    "snap_tol_s", "sza_max_deg", "ic_clamp", "bin_count", "bin_lo", "bin_hi"});
        auto& c = cfg.assemble;
        c.horizons_s = get_or(a, ctx, "horizons_s", c.horizons_s);
        c.frames = get_or(a, ctx, "frames", c.frames);
        c.sky_spacing_s = get_or(a, ctx, "sky_spacing_s", c.sky_spacing_s);
        c.sat_spacing_s = get_or(a, ctx, "sat_spacing_s", c.sat_spacing_s);
        c.sample_stride_s = get_or(a, ctx, "sample_stride_s", c.sample_stride_s);
        c.snap_tol_s = get_or(a, ctx, "snap_tol_s", c.snap_tol_s);
        c.sza_max_deg = get_or(a, ctx, "sza_max_deg", c.sza_max_deg);
        c.ic_clamp = get_or(a, ctx, "ic_clamp", c.ic_clamp);
        c.bin_count = get_or(a, ctx, "bin_count", c.bin_count);
        c.bin_lo = get_or(a, ctx, "bin_lo", c.bin_lo);
        c.bin_hi = get_or(a, ctx, "bin_hi", c.bin_hi);
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        check_keys(s, ctx + ".split", {},
                   {"holdout_start_date", "train_days", "val_days", "test_days"});
        if (s.contains("holdout_start_date"))
            cfg.split_spec.holdout_start_ts =
                parse_date(get_as<std::string>(s, ctx, "holdout_start_date"));
        auto dates = [&](const char* key, std::vector<std::int64_t>& out) {
            if (!s.contains(key)) return;
            for (const auto& d : get_as<std::vector<std::string>>(s, ctx, key))
                out.push_back(parse_date(d));
        };
        dates("train_days", cfg.split_spec.train_days);
        dates("val_days", cfg.split_spec.val_days);
        dates("test_days", cfg.split_spec.test_days);
    }
    cfg.emit_shards = get_or(j, ctx, "emit_shards", cfg.emit_shards);
    cfg.validate();
    return cfg;
}

inline json record_to_json(const SampleRecord& rec) {
    json row{{"t", rec.t},
             {"sza_deg", rec.sza_deg},
             {"ghi_t", rec.ghi_t},
             {"clear_t", rec.clear_t},
             {"sky_ts", rec.sky_ts},
             {"sat_ts", rec.sat_ts},
             {"horizons_s", rec.horizons_s},
             {"target_ghi", rec.target_ghi},
             {"target_clear", rec.target_clear},
             {"target_bin", rec.target_bin},
             {"target_map_ts", rec.target_map_ts}};
    if (!rec.ic.empty()) row["ic"] = rec.ic;
    return row;
}

inline SampleRecord record_from_json(const json& row, const std::string& ctx) {
    try {
        SampleRecord rec;
        rec.t = row.at("t").get<std::int64_t>();
        rec.sza_deg = row.at("sza_deg").get<double>();
        rec.ghi_t = row.at("ghi_t").get<double>();
        rec.clear_t = row.at("clear_t").get<double>();
        rec.sky_ts = row.at("sky_ts").get<std::vector<std::int64_t>>();
        rec.sat_ts = row.at("sat_ts").get<std::vector<std::int64_t>>();
        if (row.contains("ic")) rec.ic = row.at("ic").get<std::vector<double>>();
        rec.horizons_s = row.at("horizons_s").get<std::vector<int>>();
        rec.target_ghi = row.at("target_ghi").get<std::vector<double>>();
        rec.target_clear = row.at("target_clear").get<std::vector<double>>();
        rec.target_bin = row.at("target_bin").get<std::vector<int>>();
        rec.target_map_ts = row.at("target_map_ts").get<std::vector<std::int64_t>>();
        return rec;
    } catch (const json::exception& e) {
        throw DataError(ctx + ": bad sample record: " + e.what());
    }
}

namespace detail {

inline json gap_report_to_json(const GapReport& g) {
    return json{{"candidates", g.candidates},
                {"emitted", g.emitted},
                {"high_sza", g.high_sza},
                {"missing_sky", g.missing_sky},
                {"missing_sat", g.missing_sat},
                {"missing_irradiance", g.missing_irradiance},
                {"target_high_sza", g.target_high_sza},
                {"missing_target", g.missing_target}};
}

/// Sun position mapped into the undistorted (ground-projected) sky image;
/// the polar resampling is centered there, clamped one pixel inside the
/// frame so a radius always exists.
inline std::pair<double, double> sun_pixel_in_undistorted(const SiteSpec& site, std::int64_t ts,
                                                          double cloud_height_m,
                                                          double max_zenith_deg, int out_size) {
    const double center = (out_size - 1) / 2.0;
    const SolarPosition pos = solar_position(site.latitude_deg, site.longitude_deg, ts);
    const auto off = sun_layer_offset(pos, cloud_height_m);
    double px = center, py = center;
    if (off) {
        const double extent = 2.0 * cloud_height_m * std::tan(max_zenith_deg * kDegToRad);
        px = (off->first / extent + 0.5) * out_size - 0.5;
        py = (0.5 - off->second / extent) * out_size - 0.5;
    }
    const double lo = 1.0, hi = static_cast<double>(out_size - 2);
    return {std::clamp(px, lo, hi), std::clamp(py, lo, hi)};
}

} // namespace detail

struct PreprocessStats {
    long ci_written = 0;
    long ci_skipped_no_history = 0;
    long ci_flat_frames = 0;
    long sky_written = 0;
};

/// Raw streams to training-ready stores: cloud-index maps from the satellite
/// frames against a rolling per-slot history, undistorted (and optionally
/// variant-transformed) sky frames, assembled sample records, split files,
/// and per-split histograms.
inline void cmd_preprocess(const std::string& config_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const PreprocessConfig cfg = preprocess_config_from_json(load_json_file(config_path));

    const json manifest = load_json_file(cfg.raw_dir + "/manifest.json");
    if (!manifest.contains("scene"))
        throw DataError(cfg.raw_dir + "/manifest.json: missing scene block");
    const json& scj = manifest.at("scene").at("site");
    SiteSpec site{scj.at("latitude_deg").get<double>(), scj.at("longitude_deg").get<double>()};
    const int sat_cadence_s = manifest.at("scene").at("satellite").at("cadence_s").get<int>();

    const FisheyeCalibration cal =
        calibration_from_json(load_json_file(cfg.raw_dir + "/calibration.json"));
    const double max_zen = cfg.max_zenith_deg > 0.0 ? cfg.max_zenith_deg : cal.max_zenith_deg();
    const IrradianceSeries irr = read_irradiance_csv(cfg.raw_dir + "/irradiance.csv");

    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/ci");
    fs::create_directories(out_dir + "/sky");
    if (cfg.sat_variant != "raw") fs::create_directories(out_dir + "/ci_input");

    PreprocessStats stats;

    // Satellite stream: cloud index against the history of *prior* frames in
    // the same time-of-day slot; frames before any history accrues are
    // skipped and later counted as assembly gaps.
    {
        const FrameStore raw_sat = FrameStore::open(cfg.raw_dir + "/sat", "sat");
        if (raw_sat.empty()) throw DataError("no satellite frames under " + cfg.raw_dir);
        const Grid2D& first = raw_sat.get(raw_sat.paths().begin()->first);
        AlbedoHistory hist(first.width, first.height, sat_cadence_s, cfg.history_days);
        for (const auto& [ts, path] : raw_sat.paths()) {
            const Grid2D& frame = raw_sat.get(ts);
            const auto slot = hist.slots.find(hist.slot_of(ts));
            if (slot == hist.slots.end() || slot->second.empty()) {
                ++stats.ci_skipped_no_history;
            } else {
                const CloudIndexResult res = cloud_index(frame, ts, hist);
                if (res.flat_warning) ++stats.ci_flat_frames;
                save_fgrid(out_dir + "/ci/ci_" + std::to_string(ts) + ".fgrid", res.map);
                if (cfg.sat_variant == "closeup")
                    save_fgrid(out_dir + "/ci_input/ci_" + std::to_string(ts) + ".fgrid",
                               center_closeup(res.map));
                ++stats.ci_written;
            }
            update_history(hist, frame, ts);
        }
    }

    // Sky stream: fisheye to ground-projected square, then the configured
    // input variant.
    {
        const FrameStore raw_sky = FrameStore::open(cfg.raw_dir + "/sky", "sky");
        if (raw_sky.empty()) throw DataError("no sky frames under " + cfg.raw_dir);
        for (const auto& [ts, path] : raw_sky.paths()) {
            Grid2D img = undistort_sky(raw_sky.get(ts), cal, cfg.sky_resolution, max_zen);
            if (cfg.sky_variant == "closeup") {
                img = center_closeup(img);
            } else if (cfg.sky_variant == "spin") {
                const auto [cx, cy] = detail::sun_pixel_in_undistorted(
                    site, ts, cal.assumed_cloud_height_m, max_zen, cfg.sky_resolution);
                img = spin_transform(img, cx, cy, cfg.sky_resolution, cfg.sky_resolution);
            }
            save_fgrid(out_dir + "/sky/sky_" + std::to_string(ts) + ".fgrid", img);
            ++stats.sky_written;
        }
    }

    const FrameStore sky = FrameStore::open(out_dir + "/sky", "sky");
    const FrameStore ci = FrameStore::open(out_dir + "/ci", "ci");

    AssembleConfig acfg = cfg.assemble;
    acfg.site = site;
    GapReport gap;
    const std::vector<SampleRecord> records = assemble(sky, ci, irr, acfg, &gap);
    const SplitResult splits = split(records, cfg.split_spec);

    // Weather class per day, from the measured trace.
    json weather_by_day = json::object();
    {
        std::map<std::int64_t, std::pair<std::vector<double>, std::vector<double>>> by_day;
        for (std::size_t i = 0; i < irr.ts.size(); ++i) {
            // Rows are stamped at the interval end, so the minute closing
            // exactly at midnight still belongs to the day it covers.
            const std::int64_t day = irr.ts[i] - 1 - seconds_of_day(irr.ts[i] - 1);
            by_day[day].first.push_back(irr.ghi[i]);
            by_day[day].second.push_back(irr.ghi_clear[i]);
        }
        for (const auto& [day, traces] : by_day)
            weather_by_day[format_date(day)] = to_string(classify_day(traces.first, traces.second));
    }

    const SplitHistograms h_train = histograms(splits.train, acfg);
    const SplitHistograms h_val = histograms(splits.val, acfg);
    const SplitHistograms h_test = histograms(splits.test, acfg);
    const std::vector<std::pair<std::string, const SplitHistograms*>> hs = {
        {"train", &h_train}, {"val", &h_val}, {"test", &h_test}};
    write_histogram_csv(out_dir + "/hist_month.csv", "month", hs, &SplitHistograms::by_month);
    write_histogram_csv(out_dir + "/hist_sza.csv", "sza_bucket", hs,
                        &SplitHistograms::by_sza_bucket);
    write_histogram_csv(out_dir + "/hist_ghi.csv", "ghi_bin", hs, &SplitHistograms::by_ghi_bin);

    fs::copy_file(cfg.raw_dir + "/irradiance.csv", out_dir + "/irradiance.csv",
                  fs::copy_options::overwrite_existing);

    auto records_json = [](const std::vector<SampleRecord>& v) {
        json arr = json::array();
        for (const auto& r : v) arr.push_back(record_to_json(r));
        return arr;
    };
    json ds{{"site",
             {{"latitude_deg", site.latitude_deg}, {"longitude_deg", site.longitude_deg}}},
            {"variants", {{"sky", cfg.sky_variant}, {"sat", cfg.sat_variant}}},
            {"calibration", calibration_to_json(cal)},
            {"assemble",
             {{"horizons_s", acfg.horizons_s},
              {"frames", acfg.frames},
              {"sky_spacing_s", acfg.sky_spacing_s},
              {"sat_spacing_s", acfg.sat_spacing_s},
              {"sample_stride_s", acfg.sample_stride_s},
              {"snap_tol_s", acfg.snap_tol_s},
              {"sza_max_deg", acfg.sza_max_deg},
              {"ic_clamp", acfg.ic_clamp},
              {"bin_count", acfg.bin_count},
              {"bin_lo", acfg.bin_lo},
              {"bin_hi", acfg.bin_hi}}},
            {"gap_report", detail::gap_report_to_json(gap)},
            {"stats",
             {{"ci_written", stats.ci_written},
              {"ci_skipped_no_history", stats.ci_skipped_no_history},
              {"ci_flat_frames", stats.ci_flat_frames},
              {"sky_written", stats.sky_written},
              {"split_dropped", splits.dropped}}},
            {"weather_by_day", weather_by_day},
            {"splits",
             {{"train", records_json(splits.train)},
              {"val", records_json(splits.val)},
              {"test", records_json(splits.test)}}}};
    save_json_file(out_dir + "/dataset.json", ds);

    if (cfg.emit_shards) {
        fs::create_directories(out_dir + "/shards");
        const FrameStore sat_in = cfg.sat_variant == "raw"
                                      ? FrameStore::open(out_dir + "/ci", "ci")
                                      : FrameStore::open(out_dir + "/ci_input", "ci");
        write_shard(out_dir + "/shards/train", splits.train, sky, sat_in, ci);
        write_shard(out_dir + "/shards/val", splits.val, sky, sat_in, ci);
        write_shard(out_dir + "/shards/test", splits.test, sky, sat_in, ci);
    }
}

// ---- dataset loading ----

/// A preprocessed dataset opened for training or evaluation: split records
/// plus lazily-loaded frame stores.  `sat_in` is the (possibly transformed)
/// satellite input stream; `targets` always holds untransformed cloud-index
/// maps.
struct LoadedDataset {
    std::string dir;
    SiteSpec site;
    AssembleConfig assemble;
    std::string sky_variant, sat_variant;
    std::map<std::string, Weather> weather_by_day; // "YYYY-MM-DD" -> class
    std::map<std::string, std::vector<SampleRecord>> splits;
    FrameStore sky, sat_in, targets;

    const std::vector<SampleRecord>& records(const std::string& split_name) const {
        const auto it = splits.find(split_name);
        if (it == splits.end())
            throw ConfigError("split must be train, val or test, got '" + split_name + "'");
        return it->second;
    }
};

inline LoadedDataset open_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    LoadedDataset ds;
    ds.dir = dir;
    const json j = load_json_file(dir + "/dataset.json");
    try {
        ds.site.latitude_deg = j.at("site").at("latitude_deg").get<double>();
        ds.site.longitude_deg = j.at("site").at("longitude_deg").get<double>();
        const json& a = j.at("assemble");
        ds.assemble.site = ds.site;
        ds.assemble.horizons_s = a.at("horizons_s").get<std::vector<int>>();
        ds.assemble.frames = a.at("frames").get<int>();
        ds.assemble.sky_spacing_s = a.at("sky_spacing_s").get<int>();
        ds.assemble.sat_spacing_s = a.at("sat_spacing_s").get<int>();
        ds.assemble.sample_stride_s = a.at("sample_stride_s").get<int>();
        ds.assemble.snap_tol_s = a.at("snap_tol_s").get<int>();
        ds.assemble.sza_max_deg = a.at("sza_max_deg").get<double>();
        ds.assemble.ic_clamp = a.at("ic_clamp").get<double>();
        ds.assemble.bin_count = a.at("bin_count").get<int>();
        ds.assemble.bin_lo = a.at("bin_lo").get<double>();
        ds.assemble.bin_hi = a.at("bin_hi").get<double>();
        ds.sky_variant = j.at("variants").at("sky").get<std::string>();
        ds.sat_variant = j.at("variants").at("sat").get<std::string>();
        for (const auto& [date, w] : j.at("weather_by_day").items())
            ds.weather_by_day[date] = weather_from_string(w.get<std::string>());
        for (const char* name : {"train", "val", "test"}) {
            std::vector<SampleRecord> recs;
            for (const auto& row : j.at("splits").at(name))
                recs.push_back(record_from_json(row, dir + "/dataset.json"));
            ds.splits[name] = std::move(recs);
        }
    } catch (const json::exception& e) {
        throw DataError(dir + "/dataset.json: " + e.what());
    }
    ds.assemble.validate();
    ds.sky = FrameStore::open(dir + "/sky", "sky");
    ds.targets = FrameStore::open(dir + "/ci", "ci");
    ds.sat_in = fs::is_directory(dir + "/ci_input") ? FrameStore::open(dir + "/ci_input", "ci")
                                                    : FrameStore::open(dir + "/ci", "ci");
    return ds;
}

// ---- train ----

namespace detail {

/// The model must agree with the dataset on the sample geometry; the bin
/// range is adopted from the dataset so targets and heads stay consistent.
inline void reconcile_model_with_dataset(ModelConfig& mcfg, const LoadedDataset& ds) {
    const auto& a = ds.assemble;
    if (static_cast<int>(a.horizons_s.size()) != mcfg.horizons)
        throw ConfigError("model horizons (" + std::to_string(mcfg.horizons) +
                          ") do not match the dataset (" + std::to_string(a.horizons_s.size()) +
                          ")");
    for (int k = 0; k < mcfg.horizons; ++k)
        if (a.horizons_s[static_cast<std::size_t>(k)] != mcfg.horizon_s(k))
            throw ConfigError("dataset horizons are not multiples of the model horizon step");
    if (a.frames != mcfg.frames)
        throw ConfigError("model frame count does not match the dataset");
    mcfg.bin_count = a.bin_count;
    mcfg.bin_lo = a.bin_lo;
    mcfg.bin_hi = a.bin_hi;

    auto probe = [&](const FrameStore& store, const char* what) {
        if (store.empty()) throw DataError(std::string("dataset has no ") + what + " frames");
        const Grid2D& g = store.get(store.paths().begin()->first);
        if (g.width != mcfg.input_resolution || g.height != mcfg.input_resolution)
            throw ConfigError(std::string(what) + " frames are " + std::to_string(g.width) + "x" +
                              std::to_string(g.height) + " but the model expects " +
                              std::to_string(mcfg.input_resolution));
    };
    if (mcfg.input_sky) probe(ds.sky, "sky");
    if (mcfg.input_sat) probe(ds.sat_in, "satellite");
    if (mcfg.head_cloud_map) probe(ds.targets, "cloud-index");
    mcfg.validate();
}

inline TrainConfig train_config_from_json(const json& j, const std::string& ctx = "train") {
    check_keys(j, ctx, {},
               {"epochs", "batch", "lr", "beta1", "beta2", "adam_eps", "optimizer",
                "divergence_threshold", "shuffle_seed"});
    TrainConfig t;
    t.epochs = get_or(j, ctx, "epochs", t.epochs);
    t.batch = get_or(j, ctx, "batch", t.batch);
    t.lr = get_or(j, ctx, "lr", t.lr);
    t.beta1 = get_or(j, ctx, "beta1", t.beta1);
    t.beta2 = get_or(j, ctx, "beta2", t.beta2);
    t.adam_eps = get_or(j, ctx, "adam_eps", t.adam_eps);
    t.optimizer = get_or(j, ctx, "optimizer", t.optimizer);
    t.divergence_threshold = get_or(j, ctx, "divergence_threshold", t.divergence_threshold);
    t.shuffle_seed = get_or<std::uint64_t>(j, ctx, "shuffle_seed", t.shuffle_seed);
    t.validate();
    return t;
}

} // namespace detail

/// Trains one model per seed on the train/val splits and writes a checkpoint
/// plus a training log for each.  Multiple seeds reproduce the
/// average-over-initialisations protocol; the merging itself happens in the
/// report command.
inline void cmd_train(const std::string& config_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed_override = std::nullopt) {
    namespace fs = std::filesystem;
    const json j = load_json_file(config_path);
    check_keys(j, "train-config", {"dataset"}, {"model", "train", "seeds"});

    ModelConfig mcfg = j.contains("model") ? model_config_from_json(j.at("model")) : ModelConfig{};
    const TrainConfig tcfg = j.contains("train") ? detail::train_config_from_json(j.at("train"))
                                                 : TrainConfig{};
    std::vector<std::uint64_t> seeds =
        get_or<std::vector<std::uint64_t>>(j, "train-config", "seeds", {mcfg.seed});
    if (seed_override) seeds = {*seed_override};
    if (seeds.empty()) throw ConfigError("train-config: seeds must not be empty");

    const LoadedDataset ds = open_dataset(get_as<std::string>(j, "train-config", "dataset"));
    detail::reconcile_model_with_dataset(mcfg, ds);

    const DataBundle train_data{&ds.records("train"), &ds.sky, &ds.sat_in, &ds.targets};
    const DataBundle val_data{&ds.records("val"), &ds.sky, &ds.sat_in, &ds.targets};

    fs::create_directories(out_dir);
    for (std::uint64_t s : seeds) {
        mcfg.seed = s;
        const TrainResult res = train(mcfg, tcfg, train_data, val_data);
        const std::string tag = "_s" + std::to_string(s);
        save_checkpoint(out_dir + "/checkpoint" + tag + ".hcpt", res.checkpoint);
        write_train_log(out_dir + "/train_log" + tag + ".csv", res.log);
    }
}

// ---- evaluate ----

struct EvaluateConfig {
    std::string dataset;
    std::string checkpoint; // required unless baselines_only
    std::string split = "test";
    bool best_per_horizon = false;
    bool baselines_only = false;
    CmvOptions cmv;
};

inline EvaluateConfig evaluate_config_from_json(const json& j) {
    const std::string ctx = "evaluate";
    check_keys(j, ctx, {"dataset"},
               {"checkpoint", "split", "best_per_horizon", "baselines_only", "cmv"});
    EvaluateConfig cfg;
    cfg.dataset = get_as<std::string>(j, ctx, "dataset");
    cfg.checkpoint = get_or<std::string>(j, ctx, "checkpoint", "");
    cfg.split = get_or(j, ctx, "split", cfg.split);
    cfg.best_per_horizon = get_or(j, ctx, "best_per_horizon", cfg.best_per_horizon);
    cfg.baselines_only = get_or(j, ctx, "baselines_only", cfg.baselines_only);
    if (j.contains("cmv")) {
        const json& c = j.at("cmv");
        check_keys(c, ctx + ".cmv", {}, {"block", "search", "attenuation_k"});
        cfg.cmv.block = get_or(c, ctx, "block", cfg.cmv.block);
        cfg.cmv.search = get_or(c, ctx, "search", cfg.cmv.search);
        cfg.cmv.attenuation_k = get_or(c, ctx, "attenuation_k", cfg.cmv.attenuation_k);
    }
    if (!cfg.baselines_only && cfg.checkpoint.empty())
        throw ConfigError(ctx + ": a checkpoint is required unless baselines_only is set");
    return cfg;
}

namespace detail {

inline BinnedDistribution one_hot_dist(double value, int bins, double lo, double hi) {
    BinnedDistribution d;
    d.bin_count = bins;
    d.lo = lo;
    d.hi = hi;
    d.probs.assign(static_cast<std::size_t>(bins), 0.0);
    d.probs[static_cast<std::size_t>(bin_index(value, lo, hi, bins))] = 1.0;
    return d;
}

/// Per-method evaluation sheet: point forecasts and CRPS per horizon per
/// record, in record order.
struct MethodSheet {
    std::string name;
    std::vector<std::vector<double>> pred;   // [horizon][record]
    std::vector<std::vector<double>> crps_v; // [horizon][record]

    MethodSheet(std::string n, int horizons)
        : name(std::move(n)),
          pred(static_cast<std::size_t>(horizons)),
          crps_v(static_cast<std::size_t>(horizons)) {}
};

inline std::vector<MetricRow> metric_rows(const MethodSheet& m,
                                          const std::vector<std::vector<double>>& truth,
                                          const std::vector<int>& horizons,
                                          const std::vector<double>& ref_rmse,
                                          const std::vector<double>& ref_crps) {
    std::vector<MetricRow> rows;
    for (std::size_t k = 0; k < horizons.size(); ++k) {
        MetricRow r;
        r.horizon_s = horizons[k];
        r.n = static_cast<long>(m.pred[k].size());
        r.rmse = rmse(m.pred[k], truth[k]);
        r.fs_rmse_pct = safe_fs(r.rmse, ref_rmse[k]);
        r.mae = mae(m.pred[k], truth[k]);
        std::vector<double> abs_err(m.pred[k].size());
        for (std::size_t i = 0; i < abs_err.size(); ++i)
            abs_err[i] = std::abs(m.pred[k][i] - truth[k][i]);
        r.q95 = abs_err.size() >= 20 ? quantile95(abs_err) : std::nan("");
        double c = 0.0;
        for (double v : m.crps_v[k]) c += v;
        r.crps = m.crps_v[k].empty() ? 0.0 : c / static_cast<double>(m.crps_v[k].size());
        r.fs_crps_pct = safe_fs(r.crps, ref_crps[k]);
        rows.push_back(r);
    }
    return rows;
}

} // namespace detail

/// Scores the model (optional) and the three reference baselines on one
/// split, writing metric tables, a per-weather breakdown, per-day forecast
/// curves and the split histograms.  Deterministic and side-effect free
/// beyond the report directory, so re-running reproduces identical bytes.
inline void cmd_evaluate(const std::string& config_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const EvaluateConfig cfg = evaluate_config_from_json(load_json_file(config_path));
    const LoadedDataset ds = open_dataset(cfg.dataset);
    const std::vector<SampleRecord>& recs = ds.records(cfg.split);
    if (recs.empty()) throw DataError("split '" + cfg.split + "' has no samples");

    const std::vector<int>& horizons = ds.assemble.horizons_s;
    const int H = static_cast<int>(horizons.size());
    const int bins = ds.assemble.bin_count;
    const double lo = ds.assemble.bin_lo, hi = ds.assemble.bin_hi;

    std::vector<std::vector<double>> truth(static_cast<std::size_t>(H));
    for (const auto& rec : recs)
        for (int k = 0; k < H; ++k)
            truth[static_cast<std::size_t>(k)].push_back(rec.target_ghi[static_cast<std::size_t>(k)]);

    detail::MethodSheet sheet_per("persistence", H), sheet_spm("smart_persistence", H),
        sheet_cmv("cmv", H), sheet_model("model", H);

    for (const auto& rec : recs) {
        for (int k = 0; k < H; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            const double y_per = persistence(rec.ghi_t);
            const double y_spm = smart_persistence(rec.ghi_t, rec.clear_t, rec.target_clear[ks]);
            sheet_per.pred[ks].push_back(y_per);
            sheet_per.crps_v[ks].push_back(
                crps(detail::one_hot_dist(y_per, bins, lo, hi), rec.target_ghi[ks]));
            sheet_spm.pred[ks].push_back(y_spm);
            sheet_spm.crps_v[ks].push_back(
                crps(detail::one_hot_dist(y_spm, bins, lo, hi), rec.target_ghi[ks]));
        }
        // Cloud-motion baseline from the two most recent cloud-index maps.
        const std::size_t nf = rec.sat_ts.size();
        if (nf < 2)
            throw DataError("cloud-motion baseline needs at least two satellite frames");
        const Grid2D& prev = ds.targets.get(rec.sat_ts[nf - 2]);
        const Grid2D& curr = ds.targets.get(rec.sat_ts[nf - 1]);
        const double dt_obs = static_cast<double>(rec.sat_ts[nf - 1] - rec.sat_ts[nf - 2]);
        for (int k = 0; k < H; ++k) {
            const std::size_t ks = static_cast<std::size_t>(k);
            CmvOptions opts = cfg.cmv;
            opts.clear_sky_ghi_h = rec.target_clear[ks];
            const BaselineForecast bf =
                cmv_advect(prev, curr, dt_obs, static_cast<double>(horizons[ks]), opts);
            sheet_cmv.pred[ks].push_back(bf.ghi_hat);
            sheet_cmv.crps_v[ks].push_back(
                crps(detail::one_hot_dist(bf.ghi_hat, bins, lo, hi), rec.target_ghi[ks]));
        }
    }

    std::optional<Checkpoint> ck;
    if (!cfg.baselines_only) {
        ck = load_checkpoint(cfg.checkpoint);
        // Horizons grouped by the parameter snapshot serving them, so each
        // snapshot runs one forward per record.
        std::map<std::string, std::vector<int>> group_horizons;
        for (int k = 0; k < H; ++k) {
            const std::string name =
                cfg.best_per_horizon && ck->groups.count("h" + std::to_string(horizons[k]))
                    ? "h" + std::to_string(horizons[k])
                    : "final";
            group_horizons[name].push_back(k);
        }
        for (int k = 0; k < H; ++k) {
            sheet_model.pred[static_cast<std::size_t>(k)].resize(recs.size());
            sheet_model.crps_v[static_cast<std::size_t>(k)].resize(recs.size());
        }
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const SampleData data =
                load_sample(recs[i], ds.sky, ds.sat_in, ds.targets, ck->config);
            for (const auto& [gname, ks] : group_horizons) {
                const ForecastSet fs_out =
                    predict(ck->groups.at(gname), data.inputs, ck->config);
                for (int k : ks) {
                    const auto& f = fs_out[static_cast<std::size_t>(k)];
                    const double point = point_estimate(f, ck->config);
                    const double y = recs[i].target_ghi[static_cast<std::size_t>(k)];
                    sheet_model.pred[static_cast<std::size_t>(k)][i] = point;
                    sheet_model.crps_v[static_cast<std::size_t>(k)][i] =
                        ck->config.head_distribution
                            ? crps(f.dist, y)
                            : crps(detail::one_hot_dist(point, bins, lo, hi), y);
                }
            }
        }
    }

    // Forecast skill is always quoted against smart persistence.
    std::vector<double> ref_rmse, ref_crps;
    for (int k = 0; k < H; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        ref_rmse.push_back(rmse(sheet_spm.pred[ks], truth[ks]));
        double c = 0.0;
        for (double v : sheet_spm.crps_v[ks]) c += v;
        ref_crps.push_back(c / static_cast<double>(sheet_spm.crps_v[ks].size()));
    }

    fs::create_directories(out_dir);
    write_metric_csv(out_dir + "/metrics_persistence.csv",
                     detail::metric_rows(sheet_per, truth, horizons, ref_rmse, ref_crps));
    write_metric_csv(out_dir + "/metrics_smart_persistence.csv",
                     detail::metric_rows(sheet_spm, truth, horizons, ref_rmse, ref_crps));
    write_metric_csv(out_dir + "/metrics_cmv.csv",
                     detail::metric_rows(sheet_cmv, truth, horizons, ref_rmse, ref_crps));
    if (!cfg.baselines_only)
        write_metric_csv(out_dir + "/metrics_model.csv",
                         detail::metric_rows(sheet_model, truth, horizons, ref_rmse, ref_crps));

    // Per-weather breakdown: every record's day belongs to exactly one
    // class, so the class sheets partition the split.
    {
        std::ofstream os(out_dir + "/weather_breakdown.csv");
        if (!os) throw DataError("cannot open for writing: " + out_dir + "/weather_breakdown.csv");
        os << "method,weather,horizon_s,n,rmse,fs_rmse_pct\n";
        std::map<Weather, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const std::string date = format_date(recs[i].day_start());
            const auto it = ds.weather_by_day.find(date);
            if (it == ds.weather_by_day.end())
                throw DataError("no weather class recorded for " + date);
            by_class[it->second].push_back(i);
        }
        std::vector<const detail::MethodSheet*> sheets = {&sheet_per, &sheet_spm, &sheet_cmv};
        if (!cfg.baselines_only) sheets.push_back(&sheet_model);
        char buf[160];
        for (const auto& [w, idx] : by_class) {
            for (const auto* sheet : sheets)
                for (int k = 0; k < H; ++k) {
                    const std::size_t ks = static_cast<std::size_t>(k);
                    std::vector<double> p, y;
                    for (std::size_t i : idx) {
                        p.push_back(sheet->pred[ks][i]);
                        y.push_back(truth[ks][i]);
                    }
                    std::vector<double> spm_p;
                    for (std::size_t i : idx) spm_p.push_back(sheet_spm.pred[ks][i]);
                    const double e = rmse(p, y);
                    const double fs_pct = detail::safe_fs(e, rmse(spm_p, y));
                    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%zu,%.6f,%.6f",
                                  sheet->name.c_str(), to_string(w).c_str(), horizons[ks],
                                  idx.size(), e, fs_pct);
                    os << buf << "\n";
                }
        }
    }

    // Per-day forecast curves: one row per anchor time holding the truth,
    // the clear-sky value and each method's forecasts at every horizon.
    {
        fs::create_directories(out_dir + "/curves");
        std::map<std::int64_t, std::vector<std::size_t>> by_day;
        for (std::size_t i = 0; i < recs.size(); ++i) by_day[recs[i].day_start()].push_back(i);
        for (const auto& [day, idx] : by_day) {
            const std::string path = out_dir + "/curves/curve_" + format_date(day) + ".csv";
            std::ofstream os(path);
            if (!os) throw DataError("cannot open for writing: " + path);
            os << "timestamp_utc,ghi_wm2,ghi_clear_wm2";
            for (int h : horizons) {
                os << ",truth_" << h << "s,spm_" << h << "s";
                if (!cfg.baselines_only) os << ",model_" << h << "s";
            }
            os << "\n";
            char buf[64];
            for (std::size_t i : idx) {
                os << format_iso8601(recs[i].t);
                std::snprintf(buf, sizeof(buf), ",%.3f,%.3f", recs[i].ghi_t, recs[i].clear_t);
                os << buf;
                for (int k = 0; k < H; ++k) {
                    const std::size_t ks = static_cast<std::size_t>(k);
                    std::snprintf(buf, sizeof(buf), ",%.3f,%.3f", truth[ks][i],
                                  sheet_spm.pred[ks][i]);
                    os << buf;
                    if (!cfg.baselines_only) {
                        std::snprintf(buf, sizeof(buf), ",%.3f", sheet_model.pred[ks][i]);
                        os << buf;
                    }
                }
                os << "\n";
            }
        }
    }

    const SplitHistograms h = histograms(recs, ds.assemble);
    const std::vector<std::pair<std::string, const SplitHistograms*>> hs = {{cfg.split, &h}};
    write_histogram_csv(out_dir + "/hist_month.csv", "month", hs, &SplitHistograms::by_month);
    write_histogram_csv(out_dir + "/hist_sza.csv", "sza_bucket", hs,
                        &SplitHistograms::by_sza_bucket);
    write_histogram_csv(out_dir + "/hist_ghi.csv", "ghi_bin", hs, &SplitHistograms::by_ghi_bin);
}

// ---- sweep-alpha ----

/// Trains one model per image-loss weight and reports forecast skill per
/// horizon on the held-out split.  Cells are independent and may run on
/// worker threads; each opens its own dataset handle.
inline void cmd_sweep_alpha(const std::string& config_path, const std::string& out_dir,
                            int jobs = 1,
                            std::optional<std::uint64_t> seed_override = std::nullopt) {
    namespace fs = std::filesystem;
    const json j = load_json_file(config_path);
    const std::string ctx = "sweep-alpha";
    check_keys(j, ctx, {"dataset", "alphas"}, {"model", "train", "split", "seed"});
    const std::string dataset_dir = get_as<std::string>(j, ctx, "dataset");
    const std::vector<double> alphas = get_as<std::vector<double>>(j, ctx, "alphas");
    if (alphas.empty()) throw ConfigError(ctx + ": alphas must not be empty");
    const std::string eval_split = get_or<std::string>(j, ctx, "split", "test");
    const ModelConfig base_mcfg =
        j.contains("model") ? model_config_from_json(j.at("model")) : ModelConfig{};
    const TrainConfig tcfg =
        j.contains("train") ? detail::train_config_from_json(j.at("train")) : TrainConfig{};
    const std::uint64_t seed =
        seed_override ? *seed_override : get_or<std::uint64_t>(j, ctx, "seed", base_mcfg.seed);
    if (jobs < 1) throw ConfigError(ctx + ": jobs must be at least 1");

    // Validate the whole grid before any work starts.
    {
        const LoadedDataset probe = open_dataset(dataset_dir);
        for (double a : alphas) {
            ModelConfig m = base_mcfg;
            m.alpha = a;
            detail::reconcile_model_with_dataset(m, probe);
        }
        probe.records(eval_split);
    }

    struct CellResult {
        std::vector<double> rmse_h, fs_h;
        long n = 0;
    };
    std::vector<CellResult> results(alphas.size());
    std::vector<std::string> failures(alphas.size());
    std::atomic<std::size_t> next{0};

    auto run_cell = [&](std::size_t ci) {
        const LoadedDataset ds = open_dataset(dataset_dir);
        ModelConfig mcfg = base_mcfg;
        mcfg.alpha = alphas[ci];
        mcfg.seed = seed;
        detail::reconcile_model_with_dataset(mcfg, ds);
        const DataBundle tr{&ds.records("train"), &ds.sky, &ds.sat_in, &ds.targets};
        const DataBundle va{&ds.records("val"), &ds.sky, &ds.sat_in, &ds.targets};
        const TrainResult res = train(mcfg, tcfg, tr, va);

        const std::vector<SampleRecord>& recs = ds.records(eval_split);
        if (recs.empty()) throw DataError("split '" + eval_split + "' has no samples");
        const int H = mcfg.horizons;
        std::vector<std::vector<double>> pred(static_cast<std::size_t>(H)),
            truth(static_cast<std::size_t>(H));
        const ParameterStore& ps = res.checkpoint.groups.at("final");
        for (const auto& rec : recs) {
            const SampleData data = load_sample(rec, ds.sky, ds.sat_in, ds.targets, mcfg);
            const ForecastSet fs_out = predict(ps, data.inputs, mcfg);
            for (int k = 0; k < H; ++k) {
                pred[static_cast<std::size_t>(k)].push_back(point_estimate(fs_out[static_cast<std::size_t>(k)], mcfg));
                truth[static_cast<std::size_t>(k)].push_back(rec.target_ghi[static_cast<std::size_t>(k)]);
            }
        }
        const std::vector<double> spm = smart_persistence_rmse(recs, H);
        CellResult cell;
        cell.n = static_cast<long>(recs.size());
        for (int k = 0; k < H; ++k) {
            const double e = rmse(pred[static_cast<std::size_t>(k)], truth[static_cast<std::size_t>(k)]);
            cell.rmse_h.push_back(e);
            cell.fs_h.push_back(detail::safe_fs(e, spm[static_cast<std::size_t>(k)]));
        }
        results[ci] = std::move(cell);
    };

    auto worker = [&]() {
        for (;;) {
            const std::size_t ci = next.fetch_add(1);
            if (ci >= alphas.size()) return;
            try {
                run_cell(ci);
            } catch (const std::exception& e) {
                failures[ci] = e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(jobs),
                                                           alphas.size());
        for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t ci = 0; ci < alphas.size(); ++ci)
        if (!failures[ci].empty())
            throw TrainingFault("alpha " + std::to_string(alphas[ci]) + ": " + failures[ci]);

    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/alpha_sweep.csv");
    if (!os) throw DataError("cannot open for writing: " + out_dir + "/alpha_sweep.csv");
    os << "alpha,horizon_s,n,rmse,fs_rmse_pct\n";
    char buf[128];
    const LoadedDataset ds = open_dataset(dataset_dir);
    for (std::size_t ci = 0; ci < alphas.size(); ++ci)
        for (std::size_t k = 0; k < results[ci].rmse_h.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.6g,%d,%ld,%.6f,%.6f", alphas[ci],
                          ds.assemble.horizons_s[k], results[ci].n, results[ci].rmse_h[k],
                          results[ci].fs_h[k]);
            os << buf << "\n";
        }
}

// ---- report ----

/// Merges metric CSVs of identical layout: cells equal across inputs pass
/// through verbatim, numeric cells are averaged.  This is how scores from
/// multiple training seeds become one table.
inline void cmd_report(const std::string& config_path, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const json j = load_json_file(config_path);
    const std::string ctx = "report";
    check_keys(j, ctx, {"inputs"}, {"output"});
    const std::vector<std::string> inputs = get_as<std::vector<std::string>>(j, ctx, "inputs");
    if (inputs.empty()) throw ConfigError(ctx + ": inputs must not be empty");
    const std::string output = get_or<std::string>(j, ctx, "output", "report.csv");

    std::vector<std::vector<std::vector<std::string>>> tables; // [file][row][col]
    for (const std::string& path : inputs) {
        std::ifstream is(path);
        if (!is) throw DataError("cannot open report input: " + path);
        std::vector<std::vector<std::string>> rows;
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> cols;
            std::size_t start = 0;
            for (;;) {
                const std::size_t comma = line.find(',', start);
                cols.push_back(line.substr(start, comma - start));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            rows.push_back(std::move(cols));
        }
        if (rows.empty()) throw DataError("report input is empty: " + path);
        tables.push_back(std::move(rows));
    }
    for (std::size_t f = 1; f < tables.size(); ++f) {
        if (tables[f].size() != tables[0].size() || tables[f][0] != tables[0][0])
            throw DataError("report inputs do not share a layout: " + inputs[f]);
        for (std::size_t r = 0; r < tables[f].size(); ++r)
            if (tables[f][r].size() != tables[0][r].size())
                throw DataError("report inputs do not share a layout: " + inputs[f]);
    }

    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/" + output);
    if (!os) throw DataError("cannot open for writing: " + out_dir + "/" + output);
    char buf[64];
    for (std::size_t r = 0; r < tables[0].size(); ++r) {
        for (std::size_t c = 0; c < tables[0][r].size(); ++c) {
            if (c) os << ",";
            bool all_equal = true;
            for (std::size_t f = 1; f < tables.size(); ++f)
                all_equal = all_equal && tables[f][r][c] == tables[0][r][c];
            if (all_equal) {
                os << tables[0][r][c];
                continue;
            }
            double acc = 0.0;
            for (std::size_t f = 0; f < tables.size(); ++f) {
                std::size_t pos = 0;
                double v = 0.0;
                try {
                    v = std::stod(tables[f][r][c], &pos);
                } catch (const std::exception&) {
                    throw DataError("report cell is neither shared nor numeric at row " +
                                    std::to_string(r));
                }
                if (pos != tables[f][r][c].size())
                    throw DataError("report cell is neither shared nor numeric at row " +
                                    std::to_string(r));
                acc += v;
            }
            std::snprintf(buf, sizeof(buf), "%.6f", acc / static_cast<double>(tables.size()));
            os << buf;
        }
        os << "\n";
    }
}

} // namespace heliocast
