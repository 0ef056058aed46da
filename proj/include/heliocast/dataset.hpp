#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "heliocast/config_json.hpp"
#include "heliocast/error.hpp"
#include "heliocast/geometry.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/model.hpp"
#include "heliocast/series.hpp"
#include "heliocast/simulator.hpp"
#include "heliocast/time.hpp"

namespace heliocast {

/// Time-indexed directory of rasters named "<stream>_<unix_seconds>.fgrid".
/// Frames are loaded lazily and cached.
class FrameStore {
public:
    FrameStore() = default;

    static FrameStore open(const std::string& dir, const std::string& stream) {
        namespace fs = std::filesystem;
        FrameStore store;
        store.stream_ = stream;
        if (!fs::is_directory(dir)) throw DataError("not a frame directory: " + dir);
        const std::string prefix = stream + "_";
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string name = entry.path().filename().string();
            if (name.size() <= prefix.size() + 6 || name.rfind(prefix, 0) != 0 ||
                name.substr(name.size() - 6) != ".fgrid")
                continue;
            const std::string digits = name.substr(prefix.size(), name.size() - prefix.size() - 6);
            try {
                std::size_t pos = 0;
                const std::int64_t ts = std::stoll(digits, &pos);
                if (pos != digits.size()) continue;
                store.paths_[ts] = entry.path().string();
            } catch (const std::exception&) {
                continue;
            }
        }
        return store;
    }

    std::size_t size() const { return paths_.size(); }
    bool empty() const { return paths_.empty(); }
    const std::map<std::int64_t, std::string>& paths() const { return paths_; }

    const Grid2D& get(std::int64_t ts) const {
        const auto cached = cache_.find(ts);
        if (cached != cache_.end()) return cached->second;
        const auto it = paths_.find(ts);
        if (it == paths_.end())
            throw DataError("no " + stream_ + " frame at " + format_iso8601(ts));
        return cache_.emplace(ts, load_fgrid(it->second)).first->second;
    }

    /// Timestamp of the frame nearest `ts` within `tol` seconds (ties to the
    /// earlier frame), or nullopt.
    std::optional<std::int64_t> find_near(std::int64_t ts, int tol) const {
        std::optional<std::int64_t> best;
        std::int64_t best_d = tol + 1;
        auto it = paths_.lower_bound(ts - tol);
        for (; it != paths_.end() && it->first <= ts + tol; ++it) {
            const std::int64_t d = std::abs(it->first - ts);
            if (d < best_d) {
                best_d = d;
                best = it->first;
            }
        }
        return best;
    }

    /// Latest frame timestamp in the half-open window (lo, hi].
    std::optional<std::int64_t> last_in(std::int64_t lo, std::int64_t hi) const {
        auto it = paths_.upper_bound(hi);
        if (it == paths_.begin()) return std::nullopt;
        --it;
        if (it->first <= lo) return std::nullopt;
        return it->first;
    }

private:
    std::string stream_;
    std::map<std::int64_t, std::string> paths_;
    mutable std::unordered_map<std::int64_t, Grid2D> cache_;
};

/// One assembled hybrid sample: timestamps into the frame stores plus the
/// scalar context needed by the model and the baselines.
struct SampleRecord {
    std::int64_t t = 0;
    double sza_deg = 0.0;
    double ghi_t = 0.0;   // measured GHI at the anchor time
    double clear_t = 0.0; // clear-sky GHI at the anchor time
    std::vector<std::int64_t> sky_ts; // oldest first, one per input frame
    std::vector<std::int64_t> sat_ts;
    std::vector<double> ic; // normalized irradiance per sky frame; empty if unavailable
    std::vector<int> horizons_s;
    std::vector<double> target_ghi;
    std::vector<double> target_clear;
    std::vector<int> target_bin;
    std::vector<std::int64_t> target_map_ts;

    std::int64_t day_start() const { return t - seconds_of_day(t); }
};

struct AssembleConfig {
    SiteSpec site;
    std::vector<int> horizons_s = {600, 1200, 1800, 2400, 3000, 3600};
    int frames = 5;
    int sky_spacing_s = 120;
    int sat_spacing_s = 300;
    int sample_stride_s = 120; // candidate anchors: sky timestamps on this grid
    int snap_tol_s = 30;
    double sza_max_deg = 80.0;
    double ic_clamp = 1.5;
    int bin_count = 100;
    double bin_lo = 0.0;
    double bin_hi = 1200.0;

    void validate() const {
        if (horizons_s.empty()) throw ConfigError("no forecast horizons configured");
        for (std::size_t i = 0; i < horizons_s.size(); ++i) {
            if (horizons_s[i] <= 0) throw ConfigError("horizons must be positive");
            if (i > 0 && horizons_s[i] <= horizons_s[i - 1])
                throw ConfigError("horizons must be strictly increasing");
        }
        if (frames < 1) throw ConfigError("at least one input frame required");
        if (sky_spacing_s <= 0 || sat_spacing_s <= 0 || sample_stride_s <= 0)
            throw ConfigError("spacings must be positive");
        if (snap_tol_s < 0 || 2 * snap_tol_s >= sky_spacing_s)
            throw ConfigError("snap tolerance must be below half the frame spacing");
        if (!(sza_max_deg > 0.0 && sza_max_deg < 90.0))
            throw ConfigError("SZA cutoff must lie in (0, 90)");
        if (bin_count < 2 || !(bin_hi > bin_lo)) throw ConfigError("bad bin range");
    }
};

struct GapReport {
    long candidates = 0;
    long emitted = 0;
    long high_sza = 0;
    long missing_sky = 0;
    long missing_sat = 0;
    long missing_irradiance = 0;
    long target_high_sza = 0;
    long missing_target = 0;
};

inline int bin_index(double ghi, double lo, double hi, int bins) {
    const double w = (hi - lo) / bins;
    const int raw = static_cast<int>(std::floor((ghi - lo) / w));
    return std::clamp(raw, 0, bins - 1);
}

/// Scans every eligible anchor time and emits a record wherever all frames,
/// irradiance rows and SZA constraints line up; everything else lands in the
/// gap report rather than erroring.
inline std::vector<SampleRecord> assemble(const FrameStore& sky, const FrameStore& ci,
                                          const IrradianceSeries& irr, const AssembleConfig& cfg,
                                          GapReport* report = nullptr) {
    cfg.validate();
    if (!irr.has_clear()) throw DataError("assembly requires the clear-sky column");
    GapReport local;
    GapReport& gap = report ? *report : local;

    std::vector<SampleRecord> out;
    for (const auto& [t, path] : sky.paths()) {
        if (t % cfg.sample_stride_s != 0) continue;
        ++gap.candidates;

        const SolarPosition pos = solar_position(cfg.site.latitude_deg, cfg.site.longitude_deg, t);
        if (pos.zenith_deg > cfg.sza_max_deg) {
            ++gap.high_sza;
            continue;
        }

        SampleRecord rec;
        rec.t = t;
        rec.sza_deg = pos.zenith_deg;

        bool ok = true;
        for (int i = cfg.frames - 1; i >= 0; --i) {
            const auto ts = sky.find_near(t - static_cast<std::int64_t>(i) * cfg.sky_spacing_s,
                                          cfg.snap_tol_s);
            if (!ts) {
                ok = false;
                break;
            }
            rec.sky_ts.push_back(*ts);
        }
        if (!ok) {
            ++gap.missing_sky;
            continue;
        }

        const auto sat_last = ci.last_in(t - cfg.sat_spacing_s, t);
        if (!sat_last) {
            ++gap.missing_sat;
            continue;
        }
        for (int i = cfg.frames - 1; i >= 0 && ok; --i) {
            const auto ts = ci.find_near(*sat_last - static_cast<std::int64_t>(i) * cfg.sat_spacing_s,
                                         cfg.snap_tol_s);
            if (!ts)
                ok = false;
            else
                rec.sat_ts.push_back(*ts);
        }
        if (!ok) {
            ++gap.missing_sat;
            continue;
        }

        const auto* anchor_row = irr.find(t);
        if (!anchor_row) {
            ++gap.missing_irradiance;
            continue;
        }
        rec.ghi_t = irr.ghi[*anchor_row];
        rec.clear_t = irr.ghi_clear[*anchor_row];

        bool ic_ok = true;
        std::vector<double> ic;
        for (std::int64_t ts : rec.sky_ts) {
            const auto* row = irr.find(ts);
            if (!row || !(irr.ghi_clear[*row] > 0.0)) {
                ic_ok = false;
                break;
            }
            ic.push_back(std::clamp(irr.ghi[*row] / irr.ghi_clear[*row], 0.0, cfg.ic_clamp));
        }
        if (ic_ok) rec.ic = std::move(ic);

        for (int h : cfg.horizons_s) {
            const std::int64_t th = t + h;
            const SolarPosition tpos =
                solar_position(cfg.site.latitude_deg, cfg.site.longitude_deg, th);
            if (tpos.zenith_deg > cfg.sza_max_deg) {
                ok = false;
                ++gap.target_high_sza;
                break;
            }
            const auto* row = irr.find(th);
            const auto map_ts = ci.last_in(th - cfg.sat_spacing_s, th);
            if (!row || !map_ts) {
                ok = false;
                ++gap.missing_target;
                break;
            }
            rec.horizons_s.push_back(h);
            rec.target_ghi.push_back(irr.ghi[*row]);
            rec.target_clear.push_back(irr.ghi_clear[*row]);
            rec.target_bin.push_back(bin_index(irr.ghi[*row], cfg.bin_lo, cfg.bin_hi, cfg.bin_count));
            rec.target_map_ts.push_back(*map_ts);
        }
        if (!ok) continue;

        // Type invariants, asserted per emitted sample.
        const std::int64_t lag = t - rec.sat_ts.back();
        if (lag < 0 || lag >= cfg.sat_spacing_s)
            throw DataError("satellite lag outside the tolerance window");
        for (std::size_t i = 1; i < rec.sky_ts.size(); ++i)
            if (rec.sky_ts[i] <= rec.sky_ts[i - 1])
                throw DataError("sky frame timestamps not strictly increasing");
        for (std::size_t i = 1; i < rec.sat_ts.size(); ++i)
            if (rec.sat_ts[i] <= rec.sat_ts[i - 1])
                throw DataError("satellite frame timestamps not strictly increasing");

        ++gap.emitted;
        out.push_back(std::move(rec));
    }
    return out;
}

/// Constant planes carrying past normalized irradiance, one per frame.
inline std::vector<Grid2D> encode_ic(const std::vector<double>& past_ghi,
                                     const std::vector<double>& past_clear, int width, int height,
                                     double clamp_hi = 1.5) {
    if (past_ghi.size() != past_clear.size() || past_ghi.empty())
        throw DomainError("irradiance encoding needs matching non-empty histories");
    std::vector<Grid2D> planes;
    for (std::size_t i = 0; i < past_ghi.size(); ++i) {
        if (!(past_clear[i] > 0.0))
            throw DomainError("clear-sky value must be positive to normalize irradiance");
        Grid2D p(width, height, 1,
                 static_cast<float>(std::clamp(past_ghi[i] / past_clear[i], 0.0, clamp_hi)));
        p.value_range = {0.0f, static_cast<float>(clamp_hi)};
        planes.push_back(std::move(p));
    }
    return planes;
}

struct WeatherThresholds {
    double clear_mean = 0.85;
    double clear_std = 0.08;
    double overcast_mean = 0.45;
    double overcast_std = 0.15;
    double daytime_clear_wm2 = 10.0;
    int min_daytime_rows = 100;
};

/// Classifies one day from the statistics of the clear-sky index
/// k = ghi / clear over daytime rows.
inline Weather classify_day(const std::vector<double>& ghi, const std::vector<double>& clear,
                            const WeatherThresholds& th = {}) {
    if (ghi.size() != clear.size()) throw DomainError("series length mismatch");
    std::vector<double> k;
    for (std::size_t i = 0; i < ghi.size(); ++i)
        if (clear[i] > th.daytime_clear_wm2)
            k.push_back(std::clamp(ghi[i] / clear[i], 0.0, 1.5));
    if (static_cast<int>(k.size()) < th.min_daytime_rows)
        throw DomainError("not enough daytime measurements to classify the day");
    double mean = 0.0;
    for (double v : k) mean += v;
    mean /= static_cast<double>(k.size());
    double var = 0.0;
    for (double v : k) var += (v - mean) * (v - mean);
    const double stdev = std::sqrt(var / static_cast<double>(k.size()));
    if (mean >= th.clear_mean && stdev <= th.clear_std) return Weather::clear;
    if (mean <= th.overcast_mean && stdev <= th.overcast_std) return Weather::overcast;
    return Weather::broken;
}

/// Calendar split: days before the holdout start train; holdout days go to
/// validation (even day-of-month) or test (odd).  Explicit day sets override
/// the rule and must be pairwise disjoint.
struct SplitSpec {
    std::int64_t holdout_start_ts = -1; // default: Jan 1 of the final year seen
    std::vector<std::int64_t> train_days, val_days, test_days;

    bool explicit_mode() const {
        return !train_days.empty() || !val_days.empty() || !test_days.empty();
    }

    void validate() const {
        if (!explicit_mode()) return;
        std::set<std::int64_t> seen;
        for (const auto* v : {&train_days, &val_days, &test_days})
            for (std::int64_t d : *v) {
                if (d % 86400 != 0) throw DomainError("split days must be UTC midnights");
                if (!seen.insert(d).second)
                    throw DomainError("split day sets overlap at " + format_iso8601(d));
            }
    }
};

struct SplitResult {
    std::vector<SampleRecord> train, val, test;
    long dropped = 0; // explicit mode only: samples on unlisted days
};

inline SplitResult split(const std::vector<SampleRecord>& samples, const SplitSpec& spec) {
    spec.validate();
    SplitResult res;
    if (samples.empty()) return res;

    std::int64_t holdout = spec.holdout_start_ts;
    if (!spec.explicit_mode() && holdout < 0) {
        int final_year = 0;
        for (const auto& s : samples) final_year = std::max(final_year, to_civil(s.t).year);
        holdout = to_unix_seconds({final_year, 1, 1, 0, 0, 0});
    }

    std::set<std::int64_t> train_set(spec.train_days.begin(), spec.train_days.end());
    std::set<std::int64_t> val_set(spec.val_days.begin(), spec.val_days.end());
    std::set<std::int64_t> test_set(spec.test_days.begin(), spec.test_days.end());

    for (const auto& s : samples) {
        const std::int64_t day = s.day_start();
        if (spec.explicit_mode()) {
            if (train_set.count(day))
                res.train.push_back(s);
            else if (val_set.count(day))
                res.val.push_back(s);
            else if (test_set.count(day))
                res.test.push_back(s);
            else
                ++res.dropped;
            continue;
        }
        if (day < holdout) {
            res.train.push_back(s);
        } else {
            const CivilTime c = to_civil(day);
            (c.day % 2 == 0 ? res.val : res.test).push_back(s);
        }
    }

    // Leak check: no anchor timestamp may appear in two splits.
    std::set<std::int64_t> seen;
    for (const auto* v : {&res.train, &res.val, &res.test})
        for (const auto& s : *v)
            if (!seen.insert(s.t).second)
                throw DomainError("sample leaked across splits at " + format_iso8601(s.t));
    return res;
}

struct SplitHistograms {
    std::map<int, long> by_month;      // 1..12
    std::map<int, long> by_sza_bucket; // lower edge of a 10-degree bucket
    std::map<int, long> by_ghi_bin;    // anchor GHI bin
    long total = 0;
};

inline SplitHistograms histograms(const std::vector<SampleRecord>& samples,
                                  const AssembleConfig& cfg) {
    SplitHistograms h;
    for (const auto& s : samples) {
        ++h.by_month[to_civil(s.t).month];
        ++h.by_sza_bucket[static_cast<int>(std::floor(s.sza_deg / 10.0)) * 10];
        ++h.by_ghi_bin[bin_index(s.ghi_t, cfg.bin_lo, cfg.bin_hi, cfg.bin_count)];
        ++h.total;
    }
    return h;
}

inline void write_histogram_csv(const std::string& path, const std::string& key_name,
                                const std::vector<std::pair<std::string, const SplitHistograms*>>& splits,
                                const std::map<int, long> SplitHistograms::*field) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "split," << key_name << ",count\n";
    for (const auto& [name, hist] : splits)
        for (const auto& [key, count] : hist->*field)
            os << name << "," << key << "," << count << "\n";
}

// ---- sample shards ----

/// Externalized samples: a binary blob of concatenated rasters plus a
/// JSON-lines index holding each record's scalars and byte offsets.
inline void write_shard(const std::string& prefix, const std::vector<SampleRecord>& records,
                        const FrameStore& sky, const FrameStore& sat_in,
                        const FrameStore& targets) {
    std::ofstream bin(prefix + ".bin", std::ios::binary);
    std::ofstream idx(prefix + ".jsonl");
    if (!bin || !idx) throw DataError("cannot open shard files at " + prefix);

    for (const auto& rec : records) {
        json offsets{{"sky", json::array()}, {"sat", json::array()}, {"target_maps", json::array()}};
        auto dump = [&](std::int64_t ts, const FrameStore& store, const char* key) {
            offsets[key].push_back(static_cast<std::int64_t>(bin.tellp()));
            write_fgrid(bin, store.get(ts));
        };
        for (std::int64_t ts : rec.sky_ts) dump(ts, sky, "sky");
        for (std::int64_t ts : rec.sat_ts) dump(ts, sat_in, "sat");
        for (std::int64_t ts : rec.target_map_ts) dump(ts, targets, "target_maps");

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
                 {"target_map_ts", rec.target_map_ts},
                 {"offsets", offsets}};
        if (!rec.ic.empty()) row["ic"] = rec.ic;
        idx << row.dump() << "\n";
    }
    if (!bin || !idx) throw DataError("short write while sharding at " + prefix);
}

inline void write_shard(const std::string& prefix, const std::vector<SampleRecord>& records,
                        const FrameStore& sky, const FrameStore& ci) {
    write_shard(prefix, records, sky, ci, ci);
}

class ShardReader {
public:
    explicit ShardReader(const std::string& prefix) : bin_path_(prefix + ".bin") {
        std::ifstream idx(prefix + ".jsonl");
        if (!idx) throw DataError("cannot open shard index: " + prefix + ".jsonl");
        std::string line;
        long lineno = 0;
        while (std::getline(idx, line)) {
            ++lineno;
            if (line.empty()) continue;
            json row;
            try {
                row = json::parse(line);
            } catch (const json::exception& e) {
                throw DataError(prefix + ".jsonl:" + std::to_string(lineno) + ": " + e.what());
            }
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
            records_.push_back(rec);
            offsets_.push_back(row.at("offsets"));
        }
    }

    std::size_t size() const { return records_.size(); }
    const SampleRecord& record(std::size_t i) const { return records_[i]; }

    Grid2D frame(std::size_t i, const std::string& kind, std::size_t j) const {
        const json& off = offsets_[i].at(kind);
        std::ifstream bin(bin_path_, std::ios::binary);
        if (!bin) throw DataError("cannot open shard blob: " + bin_path_);
        bin.seekg(off.at(j).get<std::int64_t>());
        return read_fgrid(bin);
    }

private:
    std::string bin_path_;
    std::vector<SampleRecord> records_;
    std::vector<json> offsets_;
};

// ---- model glue ----

/// Materializes one record as model tensors.  Masked pixels in target maps
/// get zero loss weight.
struct SampleData {
    SampleInputs inputs;
    SampleTargets targets;
};

inline SampleData load_sample(const SampleRecord& rec, const FrameStore& sky,
                              const FrameStore& sat_in, const FrameStore& targets,
                              const ModelConfig& cfg) {
    SampleData d;
    if (cfg.input_sky)
        for (std::int64_t ts : rec.sky_ts) d.inputs.sky.push_back(nn::tensor_from_grid(sky.get(ts)));
    if (cfg.input_sat)
        for (std::int64_t ts : rec.sat_ts)
            d.inputs.sat.push_back(nn::tensor_from_grid(sat_in.get(ts)));
    if (cfg.input_ic) {
        if (rec.ic.empty())
            throw DataError("sample at " + format_iso8601(rec.t) + " lacks irradiance context");
        d.inputs.ic = rec.ic;
    }
    if (static_cast<int>(rec.horizons_s.size()) != cfg.horizons)
        throw DataError("sample horizons do not match the model configuration");
    for (std::size_t k = 0; k < rec.target_map_ts.size(); ++k) {
        const Grid2D& m = targets.get(rec.target_map_ts[k]);
        d.targets.maps.push_back(nn::tensor_from_grid(m));
        d.targets.map_weights.push_back(nn::weights_from_mask(m));
    }
    d.targets.ghi = rec.target_ghi;
    d.targets.bins = rec.target_bin;
    return d;
}

inline SampleData load_sample(const SampleRecord& rec, const FrameStore& sky, const FrameStore& ci,
                              const ModelConfig& cfg) {
    return load_sample(rec, sky, ci, ci, cfg);
}

} // namespace heliocast
