#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>

#include "heliocast/error.hpp"
#include "heliocast/time.hpp"

namespace heliocast {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

struct SolarPosition {
    double zenith_deg = 0.0;   // 0 at zenith, 90 at horizon
    double azimuth_deg = 0.0;  // compass convention: 0 = north, 90 = east
};

/// Solar position from the compact PSA ephemeris (ecliptic longitude and
/// obliquity as short trigonometric series around J2000, then equatorial to
/// horizontal via local sidereal time).  Accurate to about 0.01 degrees over
/// the 2000s-2020s, far tighter than one pixel of the imagery this feeds.
inline SolarPosition solar_position(double latitude_deg, double longitude_deg,
                                    std::int64_t unix_seconds) {
    if (!(latitude_deg >= -90.0 && latitude_deg <= 90.0))
        throw DomainError("latitude out of range [-90, 90]");
    if (!(longitude_deg >= -180.0 && longitude_deg <= 180.0))
        throw DomainError("longitude out of range [-180, 180]");

    // Days since J2000.0 (2000-01-01T12:00 UTC) and decimal UTC hour.
    const double n = unix_seconds / 86400.0 - 10957.5;
    const double hour = seconds_of_day(unix_seconds) / 3600.0;

    const double omega = 2.1429 - 0.0010394594 * n;       // lunar ascending node
    const double mean_long = 4.8950630 + 0.017202791698 * n;
    const double mean_anom = 6.2400600 + 0.0172019699 * n;
    const double ecl_long = mean_long + 0.03341607 * std::sin(mean_anom) +
                            0.00034894 * std::sin(2.0 * mean_anom) - 0.0001134 -
                            0.0000203 * std::sin(omega);
    const double obliquity = 0.4090928 - 6.2140e-9 * n + 0.0000396 * std::cos(omega);

    double ra = std::atan2(std::cos(obliquity) * std::sin(ecl_long), std::cos(ecl_long));
    if (ra < 0.0) ra += 2.0 * kPi;
    const double decl = std::asin(std::sin(obliquity) * std::sin(ecl_long));

    const double gmst_h = 6.6974243242 + 0.0657098283 * n + hour;
    const double ha = (gmst_h * 15.0 + longitude_deg) * kDegToRad - ra;

    const double lat = latitude_deg * kDegToRad;
    double cos_zen = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(ha);
    cos_zen = std::clamp(cos_zen, -1.0, 1.0);

    SolarPosition pos;
    pos.zenith_deg = std::acos(cos_zen) * kRadToDeg;
    // topocentric parallax: the observer sits one Earth radius off center
    pos.zenith_deg += (6371.01 / 149597890.0) * std::sin(pos.zenith_deg * kDegToRad) * kRadToDeg;

    // Azimuth measured clockwise from north.
    const double az = std::atan2(std::sin(ha),
                                 std::cos(ha) * std::sin(lat) - std::tan(decl) * std::cos(lat));
    pos.azimuth_deg = std::fmod(az * kRadToDeg + 180.0 + 360.0, 360.0);
    return pos;
}

/// Clear-sky global horizontal irradiance in W/m^2 from the Haurwitz model:
/// 1098 * cos(z) * exp(-0.057 / cos(z)), zero at or below the horizon.
inline double clear_sky_ghi(const SolarPosition& pos) {
    if (pos.zenith_deg >= 90.0 || pos.zenith_deg < 0.0) return 0.0;
    const double cz = std::cos(pos.zenith_deg * kDegToRad);
    if (cz <= 0.0) return 0.0;
    return 1098.0 * cz * std::exp(-0.057 / cz);
}

inline double clear_sky_ghi(double latitude_deg, double longitude_deg, std::int64_t unix_seconds) {
    return clear_sky_ghi(solar_position(latitude_deg, longitude_deg, unix_seconds));
}

/// Horizontal (east, north) displacement in meters from an observer to the
/// point where the sun ray through a layer at `height_m` meets that layer.
/// Undefined near the horizon, where tan(z) blows up: nullopt at z >= 89 deg.
inline std::optional<std::pair<double, double>> sun_layer_offset(const SolarPosition& pos,
                                                                 double height_m) {
    if (height_m <= 0.0) throw DomainError("layer height must be positive");
    if (pos.zenith_deg >= 89.0) return std::nullopt;
    const double rho = height_m * std::tan(pos.zenith_deg * kDegToRad);
    const double az = pos.azimuth_deg * kDegToRad;
    return std::make_pair(rho * std::sin(az), rho * std::cos(az));
}

} // namespace heliocast
