#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <utility>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/imaging.hpp"

namespace heliocast {

/// Persistence: the future equals the present.
inline double persistence(double y_t) { return y_t; }

/// Smart persistence: persists the clear-sky index instead of the raw value,
///   y_hat = y_t * yclr(t + dt) / yclr(t).
/// Requires a non-zero clear-sky value at the anchor time.
inline double smart_persistence(double y_t, double yclr_t, double yclr_th) {
    if (!(yclr_t > 0.0)) throw DomainError("clear-sky value at anchor time must be positive");
    if (yclr_th < 0.0) throw DomainError("clear-sky value at horizon must be non-negative");
    return y_t * yclr_th / yclr_t;
}

struct CmvOptions {
    int block = 16;            // block-matching tile side, pixels
    int search = 8;            // max displacement per axis, pixels
    double attenuation_k = 0.75;  // irradiance attenuation per unit cloud index
    double clear_sky_ghi_h = 0.0; // clear-sky GHI at the forecast horizon
    std::optional<std::pair<double, double>> site_pixel; // (x, y); default image center
};

struct BaselineForecast {
    double horizon_s = 0.0;
    double ghi_hat = 0.0;
    Grid2D advected_map;
    std::pair<double, double> motion_px_per_obs{0.0, 0.0}; // (dx, dy) between observations
};

namespace detail {

/// Global motion between two frames: per-tile integer displacement minimizing
/// mean absolute difference, then the componentwise median over tiles.
/// Ties prefer the smallest displacement so static scenes report zero motion.
inline std::pair<double, double> estimate_motion(const Grid2D& prev, const Grid2D& curr,
                                                 int block, int search) {
    std::vector<double> dxs, dys;
    for (int by = 0; by + block <= curr.height; by += block) {
        for (int bx = 0; bx + block <= curr.width; bx += block) {
            double best = std::numeric_limits<double>::infinity();
            int best_dx = 0, best_dy = 0;
            for (int dy = -search; dy <= search; ++dy) {
                for (int dx = -search; dx <= search; ++dx) {
                    if (bx - dx < 0 || bx - dx + block > prev.width ||
                        by - dy < 0 || by - dy + block > prev.height)
                        continue;
                    double acc = 0.0;
                    long n = 0;
                    for (int y = 0; y < block; ++y)
                        for (int x = 0; x < block; ++x) {
                            if (!curr.valid(by + y, bx + x) || !prev.valid(by + y - dy, bx + x - dx))
                                continue;
                            acc += std::abs(curr.at(0, by + y, bx + x) -
                                            prev.at(0, by + y - dy, bx + x - dx));
                            ++n;
                        }
                    if (n == 0) continue;
                    const double mad = acc / static_cast<double>(n);
                    const long cost = std::abs(dx) + std::abs(dy);
                    const long best_cost = std::abs(best_dx) + std::abs(best_dy);
                    if (mad < best - 1e-12 ||
                        (mad < best + 1e-12 &&
                         (cost < best_cost ||
                          (cost == best_cost && (dy < best_dy || (dy == best_dy && dx < best_dx)))))) {
                        best = mad;
                        best_dx = dx;
                        best_dy = dy;
                    }
                }
            }
            if (std::isfinite(best)) {
                dxs.push_back(best_dx);
                dys.push_back(best_dy);
            }
        }
    }
    if (dxs.empty()) throw DomainError("no usable tile for motion estimation");
    auto median = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    return {median(dxs), median(dys)};
}

} // namespace detail

/// Cloud-motion-vector forecast: estimates a global displacement between two
/// consecutive cloud-index maps, scales it to the horizon, translates the
/// current map by it, and converts the cloud index at the site pixel to GHI
/// via ghi = clear_sky * (1 - k * ci).
inline BaselineForecast cmv_advect(const Grid2D& map_prev, const Grid2D& map_curr,
                                   double dt_obs_s, double horizon_s,
                                   const CmvOptions& opts = {}) {
    if (map_prev.width != map_curr.width || map_prev.height != map_curr.height)
        throw DomainError("consecutive maps must have equal dimensions");
    if (map_prev.channels != 1 || map_curr.channels != 1)
        throw DomainError("cloud-motion input must be single-channel");
    if (!(dt_obs_s > 0.0)) throw DomainError("observation spacing must be positive");
    if (!(horizon_s > 0.0)) throw DomainError("horizon must be positive");
    if (opts.block < 4) throw DomainError("matching block must be at least 4 pixels");
    if (opts.search < 1) throw DomainError("search radius must be at least 1 pixel");
    if (opts.block > std::min(map_curr.width, map_curr.height) ||
        2 * opts.search >= std::min(map_curr.width, map_curr.height) - opts.block)
        throw DomainError("search window exceeds the image");

    BaselineForecast fc;
    fc.horizon_s = horizon_s;
    fc.motion_px_per_obs = detail::estimate_motion(map_prev, map_curr, opts.block, opts.search);

    const double scale = horizon_s / dt_obs_s;
    const double dx = fc.motion_px_per_obs.first * scale;
    const double dy = fc.motion_px_per_obs.second * scale;
    fc.advected_map = translate_image(map_curr, dx, dy);

    const double sx = opts.site_pixel ? opts.site_pixel->first : (map_curr.width - 1) / 2.0;
    const double sy = opts.site_pixel ? opts.site_pixel->second : (map_curr.height - 1) / 2.0;
    if (sx < 0.0 || sx > map_curr.width - 1 || sy < 0.0 || sy > map_curr.height - 1)
        throw DomainError("site pixel outside the map");
    const auto ci_at_site = bilinear_sample(fc.advected_map, 0, sx, sy);
    // If advection pushed the valid region off the site, fall back to the
    // current (un-advected) cloudiness there.
    const double ci = ci_at_site ? *ci_at_site
                                 : bilinear_sample(map_curr, 0, sx, sy).value_or(0.0);
    fc.ghi_hat = std::max(0.0, opts.clear_sky_ghi_h * (1.0 - opts.attenuation_k * ci));
    return fc;
}

} // namespace heliocast
