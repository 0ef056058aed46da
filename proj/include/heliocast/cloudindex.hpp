#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/time.hpp"

namespace heliocast {

/// Rolling history of satellite albedo frames bucketed by time-of-day slot,
/// used to estimate the per-pixel clear-ground reflectance (the darkest value
/// a pixel took in the same slot over the retention window).
struct AlbedoHistory {
    struct TimedFrame {
        std::int64_t ts = 0;
        Grid2D frame;
    };

    int width = 0;
    int height = 0;
    int slot_period_s = 300;
    int retention_days = 10;
    std::map<int, std::deque<TimedFrame>> slots;

    AlbedoHistory() = default;
    AlbedoHistory(int w, int h, int slot_period = 300, int retention = 10)
        : width(w), height(h), slot_period_s(slot_period), retention_days(retention) {
        if (w <= 0 || h <= 0) throw DomainError("history dimensions must be positive");
        if (slot_period <= 0 || 86400 % slot_period != 0)
            throw DomainError("slot period must divide 86400");
        if (retention < 1) throw DomainError("retention must be at least one day");
    }

    int slot_of(std::int64_t ts) const { return seconds_of_day(ts) / slot_period_s; }

    /// Per-pixel minimum over the retained frames of a slot, min over valid
    /// pixels only.  A pixel masked in every retained frame is masked.
    Grid2D slot_minimum(int slot) const {
        const auto it = slots.find(slot);
        if (it == slots.end() || it->second.empty())
            throw DomainError("no history for time-of-day slot " + std::to_string(slot));
        Grid2D out(width, height, 1, std::numeric_limits<float>::infinity());
        out.ensure_mask();
        std::fill(out.mask.begin(), out.mask.end(), 0);
        for (const auto& tf : it->second)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    if (tf.frame.valid(y, x)) {
                        out.at(0, y, x) = std::min(out.at(0, y, x), tf.frame.at(0, y, x));
                        out.set_valid(y, x, true);
                    }
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if (!out.valid(y, x)) out.at(0, y, x) = 0.0f;
        if (const auto ext = out.valid_extent()) out.value_range = *ext;
        return out;
    }
};

/// Inserts a frame and evicts entries older than the retention window
/// relative to the newest timestamp seen in that slot; each slot also never
/// retains more than `retention_days` frames.
inline void update_history(AlbedoHistory& hist, const Grid2D& frame, std::int64_t ts) {
    if (frame.width != hist.width || frame.height != hist.height)
        throw DomainError("frame dimensions do not match the history");
    if (frame.channels != 1) throw DomainError("albedo history expects single-channel frames");
    auto& dq = hist.slots[hist.slot_of(ts)];
    if (!dq.empty() && ts <= dq.back().ts)
        throw DomainError("history frames must arrive in increasing time order");
    dq.push_back({ts, frame});
    const std::int64_t cutoff = ts - static_cast<std::int64_t>(hist.retention_days) * 86400;
    while (!dq.empty() && dq.front().ts <= cutoff) dq.pop_front();
    while (dq.size() > static_cast<std::size_t>(hist.retention_days)) dq.pop_front();
}

struct CloudIndexResult {
    Grid2D map;               // cloud index in [0, 1]
    bool flat_warning = false;  // no usable dynamic range anywhere in the frame
    long clamped_low = 0;       // pixels darker than their historical minimum
    long clamped_high = 0;      // pixels brighter than the frame maximum headroom
};

/// Normalized cloudiness of a satellite frame:
///   ci = clamp((p - p_min) / (p_max - p_min), 0, 1)
/// where p_min is the per-pixel historical minimum for the frame's
/// time-of-day slot and p_max is the brightest valid pixel of this frame.
/// Pixels with no dynamic range map to 0; if the whole frame is flat the
/// result is all zeros with `flat_warning` set.
inline CloudIndexResult cloud_index(const Grid2D& frame, std::int64_t ts,
                                    const AlbedoHistory& hist) {
    if (frame.width != hist.width || frame.height != hist.height)
        throw DomainError("frame dimensions do not match the history");
    if (frame.channels != 1) throw DomainError("cloud index expects single-channel frames");
    const Grid2D pmin = hist.slot_minimum(hist.slot_of(ts));

    double p_max = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x)
            if (frame.valid(y, x)) p_max = std::max(p_max, static_cast<double>(frame.at(0, y, x)));
    if (!std::isfinite(p_max)) throw DomainError("frame has no valid pixels");

    CloudIndexResult res;
    res.map = Grid2D(frame.width, frame.height, 1);
    res.map.value_range = {0.0f, 1.0f};
    bool any_masked = false;
    res.map.ensure_mask();
    long flat_pixels = 0;
    long considered = 0;
    for (int y = 0; y < frame.height; ++y)
        for (int x = 0; x < frame.width; ++x) {
            if (!frame.valid(y, x) || !pmin.valid(y, x)) {
                res.map.set_valid(y, x, false);
                any_masked = true;
                continue;
            }
            ++considered;
            const double denom = p_max - pmin.at(0, y, x);
            if (denom <= 1e-12) {
                res.map.at(0, y, x) = 0.0f;
                ++flat_pixels;
                continue;
            }
            const double raw = (frame.at(0, y, x) - pmin.at(0, y, x)) / denom;
            if (raw < 0.0) ++res.clamped_low;
            if (raw > 1.0) ++res.clamped_high;
            res.map.at(0, y, x) = static_cast<float>(std::clamp(raw, 0.0, 1.0));
        }
    if (considered == 0) throw DomainError("no pixel has both a value and a history");
    res.flat_warning = flat_pixels == considered;
    if (!any_masked) res.map.mask.clear();
    return res;
}

/// History checkpoint: "HHST" magic, u32 version, u32 slot period,
/// u32 retention days, u32 width, u32 height, u32 frame count, then per frame
/// (i32 slot, i64 timestamp) followed by the frame as an embedded raster.
inline void save_history(const std::string& path, const AlbedoHistory& hist) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write("HHST", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(hist.slot_period_s));
    detail::write_u32(os, static_cast<std::uint32_t>(hist.retention_days));
    detail::write_u32(os, static_cast<std::uint32_t>(hist.width));
    detail::write_u32(os, static_cast<std::uint32_t>(hist.height));
    std::uint32_t count = 0;
    for (const auto& [slot, dq] : hist.slots) count += static_cast<std::uint32_t>(dq.size());
    detail::write_u32(os, count);
    for (const auto& [slot, dq] : hist.slots)
        for (const auto& tf : dq) {
            detail::write_u32(os, static_cast<std::uint32_t>(slot));
            detail::write_i64(os, tf.ts);
            write_fgrid(os, tf.frame);
        }
    if (!os) throw DataError("short write while saving history: " + path);
}

inline AlbedoHistory load_history(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open history: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "HHST", 4) != 0) throw DataError("bad history magic");
    if (detail::read_u32(is) != 1u) throw DataError("unsupported history version");
    const int slot_period = static_cast<int>(detail::read_u32(is));
    const int retention = static_cast<int>(detail::read_u32(is));
    const int w = static_cast<int>(detail::read_u32(is));
    const int h = static_cast<int>(detail::read_u32(is));
    const std::uint32_t count = detail::read_u32(is);
    AlbedoHistory hist(w, h, slot_period, retention);
    for (std::uint32_t i = 0; i < count; ++i) {
        const int slot = static_cast<int>(detail::read_u32(is));
        const std::int64_t ts = detail::read_i64(is);
        Grid2D frame = read_fgrid(is);
        if (frame.width != w || frame.height != h) throw DataError("history frame size mismatch");
        hist.slots[slot].push_back({ts, std::move(frame)});
    }
    if (!is) throw DataError("truncated history: " + path);
    return hist;
}

} // namespace heliocast
