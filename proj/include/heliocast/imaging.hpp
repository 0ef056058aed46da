#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/geometry.hpp"
#include "heliocast/grid.hpp"

namespace heliocast {

// Ground-plane image convention used throughout: columns run west -> east and
// rows run north -> south, so pixel (row i, col j) of an N-pixel-wide frame
// spanning `extent` meters sits at
//   x_east  = ((j + 0.5) / N - 0.5) * extent
//   y_north = (0.5 - (i + 0.5) / N) * extent
// Fisheye frames are north-up as well: image azimuth 0 points to row 0.

/// Radial fisheye lens model: a strictly increasing table mapping view zenith
/// angle to radial distance from the optical center, plus the height of the
/// cloud layer the undistortion projects onto.
struct FisheyeCalibration {
    double center_x = 0.0; // pixel coordinates of the optical axis
    double center_y = 0.0;
    std::vector<std::pair<double, double>> radius_per_zenith; // (zenith_deg, radius_px)
    double assumed_cloud_height_m = 2000.0;

    void validate() const {
        if (radius_per_zenith.size() < 2)
            throw DomainError("fisheye table needs at least two knots");
        for (std::size_t i = 0; i < radius_per_zenith.size(); ++i) {
            if (radius_per_zenith[i].first < 0.0 || radius_per_zenith[i].first >= 90.0)
                throw DomainError("fisheye zenith knots must lie in [0, 90)");
            if (i > 0 && (radius_per_zenith[i].first <= radius_per_zenith[i - 1].first ||
                          radius_per_zenith[i].second <= radius_per_zenith[i - 1].second))
                throw DomainError("fisheye table must be strictly increasing");
        }
        if (radius_per_zenith.front().second < 0.0)
            throw DomainError("fisheye radii must be non-negative");
        if (assumed_cloud_height_m <= 0.0)
            throw DomainError("assumed cloud height must be positive");
    }

    double max_zenith_deg() const { return radius_per_zenith.back().first; }
    double max_radius_px() const { return radius_per_zenith.back().second; }

    /// Piecewise-linear radius for a zenith angle within the table span.
    double radius_for_zenith(double zenith_deg) const {
        const auto& t = radius_per_zenith;
        if (zenith_deg <= t.front().first) {
            // Extrapolate through the origin below the first knot.
            return t.front().first > 0.0 ? t.front().second * zenith_deg / t.front().first
                                         : t.front().second;
        }
        if (zenith_deg >= t.back().first) return t.back().second;
        for (std::size_t i = 1; i < t.size(); ++i)
            if (zenith_deg <= t[i].first) {
                const double f = (zenith_deg - t[i - 1].first) / (t[i].first - t[i - 1].first);
                return t[i - 1].second + f * (t[i].second - t[i - 1].second);
            }
        return t.back().second;
    }

    /// Inverse of radius_for_zenith on the table span.
    double zenith_for_radius(double radius_px) const {
        const auto& t = radius_per_zenith;
        if (radius_px <= t.front().second) {
            return t.front().second > 0.0 ? t.front().first * radius_px / t.front().second
                                          : t.front().first;
        }
        if (radius_px >= t.back().second) return t.back().first;
        for (std::size_t i = 1; i < t.size(); ++i)
            if (radius_px <= t[i].second) {
                const double f = (radius_px - t[i - 1].second) / (t[i].second - t[i - 1].second);
                return t[i - 1].first + f * (t[i].first - t[i - 1].first);
            }
        return t.back().first;
    }
};

/// Reprojects a raw fisheye sky image onto a square grid on the cloud layer
/// at the calibrated height.  The output spans the ground disk reached at
/// `max_zenith_deg` (defaults to the calibration's table limit) and masks
/// pixels whose view angle falls outside it.
inline Grid2D undistort_sky(const Grid2D& raw, const FisheyeCalibration& cal, int out_size,
                            double max_zenith_deg = -1.0) {
    cal.validate();
    if (out_size < 8) throw DomainError("undistorted output size must be at least 8");
    if (cal.center_x < 0.0 || cal.center_x > raw.width - 1 ||
        cal.center_y < 0.0 || cal.center_y > raw.height - 1)
        throw DomainError("optical center outside the raw image");
    if (max_zenith_deg < 0.0) max_zenith_deg = cal.max_zenith_deg();
    if (max_zenith_deg <= 0.0 || max_zenith_deg > cal.max_zenith_deg())
        throw DomainError("max zenith outside the calibrated range");

    const double h = cal.assumed_cloud_height_m;
    const double extent = 2.0 * h * std::tan(max_zenith_deg * kDegToRad);
    Grid2D out(out_size, out_size, raw.channels);
    out.value_range = raw.value_range;
    out.ensure_mask();
    for (int i = 0; i < out_size; ++i) {
        for (int j = 0; j < out_size; ++j) {
            const double x_east = ((j + 0.5) / out_size - 0.5) * extent;
            const double y_north = (0.5 - (i + 0.5) / out_size) * extent;
            const double rho = std::hypot(x_east, y_north);
            const double zen = std::atan2(rho, h) * kRadToDeg;
            if (zen > max_zenith_deg) {
                out.set_valid(i, j, false);
                continue;
            }
            const double az = std::atan2(x_east, y_north); // compass azimuth
            const double r = cal.radius_for_zenith(zen);
            const double px = cal.center_x + r * std::sin(az);
            const double py = cal.center_y - r * std::cos(az);
            bool ok = true;
            for (int c = 0; c < raw.channels; ++c) {
                const auto v = bilinear_sample(raw, c, px, py);
                if (!v) {
                    ok = false;
                    break;
                }
                out.at(c, i, j) = static_cast<float>(*v);
            }
            if (!ok) out.set_valid(i, j, false);
        }
    }
    return out;
}

namespace detail {

inline std::vector<double> binomial_kernel(int factor) {
    // Length 2*factor - 1 row of Pascal's triangle, normalized.
    const int n = 2 * factor - 1;
    std::vector<double> k(static_cast<std::size_t>(n), 1.0);
    for (int i = 1; i < n; ++i)
        for (int j = i - 1; j > 0; --j) k[static_cast<std::size_t>(j)] += k[static_cast<std::size_t>(j - 1)];
    double s = 0.0;
    for (double v : k) s += v;
    for (double& v : k) v /= s;
    return k;
}

} // namespace detail

/// Anti-aliased integer downscale: separable binomial low-pass of length
/// 2*factor - 1 centered on each kept sample, then stride sampling.  Output
/// dimensions are the input's divided by `factor` (which must divide both).
/// Masked taps get zero weight with renormalization; an output pixel whose
/// stencil is fully masked is masked.
inline Grid2D downscale(const Grid2D& img, int factor) {
    if (factor < 2) throw DomainError("downscale factor must be at least 2");
    if (img.width % factor != 0 || img.height % factor != 0)
        throw DomainError("image dimensions must be divisible by the downscale factor");
    const std::vector<double> kernel = detail::binomial_kernel(factor);
    const int half = factor - 1;
    const int ow = img.width / factor;
    const int oh = img.height / factor;

    // Horizontal pass at full height, evaluated only at kept columns.
    Grid2D mid(ow, img.height, img.channels);
    std::vector<double> midw(static_cast<std::size_t>(ow) * img.height, 0.0);
    for (int y = 0; y < img.height; ++y) {
        for (int ox = 0; ox < ow; ++ox) {
            const int cx = ox * factor;
            double wsum = 0.0;
            for (int t = -half; t <= half; ++t) {
                const int x = cx + t;
                if (x < 0 || x >= img.width || !img.valid(y, x)) continue;
                wsum += kernel[static_cast<std::size_t>(t + half)];
            }
            midw[static_cast<std::size_t>(y) * ow + ox] = wsum;
            if (wsum <= 0.0) continue;
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t) {
                    const int x = cx + t;
                    if (x < 0 || x >= img.width || !img.valid(y, x)) continue;
                    acc += kernel[static_cast<std::size_t>(t + half)] * img.at(c, y, x);
                }
                mid.at(c, y, ox) = static_cast<float>(acc / wsum);
            }
        }
    }

    Grid2D out(ow, oh, img.channels);
    out.value_range = img.value_range;
    bool any_masked = false;
    std::vector<std::uint8_t> omask(static_cast<std::size_t>(ow) * oh, 1);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int cy = oy * factor;
            double wsum = 0.0;
            for (int t = -half; t <= half; ++t) {
                const int y = cy + t;
                if (y < 0 || y >= img.height) continue;
                const double wrow = midw[static_cast<std::size_t>(y) * ow + ox];
                if (wrow <= 0.0) continue;
                wsum += kernel[static_cast<std::size_t>(t + half)];
            }
            if (wsum <= 0.0) {
                omask[static_cast<std::size_t>(oy) * ow + ox] = 0;
                any_masked = true;
                continue;
            }
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int t = -half; t <= half; ++t) {
                    const int y = cy + t;
                    if (y < 0 || y >= img.height) continue;
                    if (midw[static_cast<std::size_t>(y) * ow + ox] <= 0.0) continue;
                    acc += kernel[static_cast<std::size_t>(t + half)] * mid.at(c, y, ox);
                }
                out.at(c, oy, ox) = static_cast<float>(acc / wsum);
            }
        }
    }
    if (any_masked || img.any_masked()) out.mask = std::move(omask);
    return out;
}

/// Resamples an image into polar coordinates about `center` (pixel coords).
/// Output row r, column a holds the value at radius r * dr and angle
/// a * (2*pi / angular_bins), with dr chosen so the last row lands on the
/// nearest image edge.  Angle 0 points along +x (columns) and increases
/// toward +y (rows).  Samples outside the source (or masked) are masked.
inline Grid2D spin_transform(const Grid2D& img, double center_x, double center_y,
                             int radial_bins, int angular_bins) {
    if (radial_bins < 2 || angular_bins < 4)
        throw DomainError("polar grid needs at least 2 radial and 4 angular bins");
    if (center_x < 0.0 || center_x > img.width - 1 || center_y < 0.0 || center_y > img.height - 1)
        throw DomainError("polar center outside the image");
    const double r_max = std::min(std::min(center_x, img.width - 1 - center_x),
                                  std::min(center_y, img.height - 1 - center_y));
    if (r_max <= 0.0) throw DomainError("polar center sits on the image edge");
    const double dr = r_max / (radial_bins - 1);
    const double dtheta = 2.0 * kPi / angular_bins;

    Grid2D out(angular_bins, radial_bins, img.channels);
    out.value_range = img.value_range;
    bool any_masked = false;
    out.ensure_mask();
    for (int r = 0; r < radial_bins; ++r) {
        for (int a = 0; a < angular_bins; ++a) {
            const double rho = r * dr;
            const double phi = a * dtheta;
            const double x = center_x + rho * std::cos(phi);
            const double y = center_y + rho * std::sin(phi);
            bool ok = true;
            for (int c = 0; c < img.channels; ++c) {
                const auto v = bilinear_sample(img, c, x, y);
                if (!v) {
                    ok = false;
                    break;
                }
                out.at(c, r, a) = static_cast<float>(*v);
            }
            if (!ok) {
                out.set_valid(r, a, false);
                any_masked = true;
            }
        }
    }
    if (!any_masked && !img.any_masked()) out.mask.clear();
    return out;
}

/// Inverse of spin_transform back onto a square image of side `out_size`
/// about the same center.  Pixels beyond the polar grid's outermost radius
/// are masked.  Interpolation wraps in angle and clamps in radius.
inline Grid2D spin_inverse(const Grid2D& polar, double center_x, double center_y, int out_size) {
    const int radial_bins = polar.height;
    const int angular_bins = polar.width;
    if (radial_bins < 2 || angular_bins < 4) throw DomainError("implausible polar grid");
    if (center_x < 0.0 || center_x > out_size - 1 || center_y < 0.0 || center_y > out_size - 1)
        throw DomainError("polar center outside the output image");
    const double r_max = std::min(std::min(center_x, out_size - 1 - center_x),
                                  std::min(center_y, out_size - 1 - center_y));
    if (r_max <= 0.0) throw DomainError("polar center sits on the image edge");
    const double dr = r_max / (radial_bins - 1);
    const double dtheta = 2.0 * kPi / angular_bins;

    Grid2D out(out_size, out_size, polar.channels);
    out.value_range = polar.value_range;
    out.ensure_mask();
    for (int i = 0; i < out_size; ++i) {
        for (int j = 0; j < out_size; ++j) {
            const double dx = j - center_x;
            const double dy = i - center_y;
            const double rho = std::hypot(dx, dy);
            if (rho > r_max + 1e-9) {
                out.set_valid(i, j, false);
                continue;
            }
            double phi = std::atan2(dy, dx);
            if (phi < 0.0) phi += 2.0 * kPi;
            const double rf = std::min(rho / dr, static_cast<double>(radial_bins - 1));
            const double af = phi / dtheta;

            const int r0 = static_cast<int>(std::floor(rf));
            const int r1 = std::min(r0 + 1, radial_bins - 1);
            const double fr = rf - r0;
            const int a0 = static_cast<int>(std::floor(af)) % angular_bins;
            const int a1 = (a0 + 1) % angular_bins;
            const double fa = af - std::floor(af);

            const int rr[4] = {r0, r0, r1, r1};
            const int aa[4] = {a0, a1, a0, a1};
            const double w[4] = {(1 - fr) * (1 - fa), (1 - fr) * fa, fr * (1 - fa), fr * fa};
            bool ok = true;
            for (int c = 0; c < polar.channels && ok; ++c) {
                double acc = 0.0, wsum = 0.0;
                for (int t = 0; t < 4; ++t) {
                    if (w[t] <= 0.0 || !polar.valid(rr[t], aa[t])) continue;
                    acc += w[t] * polar.at(c, rr[t], aa[t]);
                    wsum += w[t];
                }
                if (wsum <= 0.0)
                    ok = false;
                else
                    out.at(c, i, j) = static_cast<float>(acc / wsum);
            }
            if (!ok) out.set_valid(i, j, false);
        }
    }
    return out;
}

/// Crops the central half-side window and bilinearly upsamples it back to the
/// input dimensions, doubling the apparent scale of the image center.
inline Grid2D center_closeup(const Grid2D& img) {
    if (img.width % 2 != 0 || img.height % 2 != 0)
        throw DomainError("closeup requires even image dimensions");
    const int cw = img.width / 2;
    const int ch = img.height / 2;
    const int ox = img.width / 4;
    const int oy = img.height / 4;

    Grid2D crop(cw, ch, img.channels);
    crop.value_range = img.value_range;
    if (img.any_masked()) crop.ensure_mask();
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            for (int c = 0; c < img.channels; ++c) crop.at(c, y, x) = img.at(c, y + oy, x + ox);
            if (!crop.mask.empty()) crop.set_valid(y, x, img.valid(y + oy, x + ox));
        }

    Grid2D out(img.width, img.height, img.channels);
    out.value_range = img.value_range;
    bool any_masked = false;
    out.ensure_mask();
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            const double sx = (j + 0.5) / 2.0 - 0.5;
            const double sy = (i + 0.5) / 2.0 - 0.5;
            bool ok = true;
            for (int c = 0; c < img.channels; ++c) {
                const auto v = bilinear_sample(crop, c, sx, sy);
                if (!v) {
                    ok = false;
                    break;
                }
                out.at(c, i, j) = static_cast<float>(*v);
            }
            if (!ok) {
                out.set_valid(i, j, false);
                any_masked = true;
            }
        }
    }
    if (!any_masked) out.mask.clear();
    return out;
}

/// Translates an image by a fractional pixel offset (dx to the right, dy
/// down), masking pixels whose source falls outside the frame.
inline Grid2D translate_image(const Grid2D& img, double dx, double dy) {
    Grid2D out(img.width, img.height, img.channels);
    out.value_range = img.value_range;
    out.ensure_mask();
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) {
            bool ok = true;
            for (int c = 0; c < img.channels; ++c) {
                const auto v = bilinear_sample(img, c, j - dx, i - dy);
                if (!v) {
                    ok = false;
                    break;
                }
                out.at(c, i, j) = static_cast<float>(*v);
            }
            if (!ok) out.set_valid(i, j, false);
        }
    return out;
}

} // namespace heliocast
