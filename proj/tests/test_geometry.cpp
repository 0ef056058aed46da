#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heliocast/geometry.hpp"
#include "heliocast/time.hpp"

using namespace heliocast;

namespace {

// Reference angles computed with an independent NREL-style ephemeris
// implementation; agreement is required to half a degree.
struct SunCase {
    double lat, lon;
    std::int64_t ts;
    double zen, az;
};

constexpr double kTolDeg = 0.5;

} // namespace

TEST_CASE("solar position matches an independent ephemeris") {
    const SunCase cases[] = {
        // Paris-area site, midsummer near local noon
        {48.713, 2.208, 1561117920, 25.2778, 179.5212},
        // same site, early morning: low sun in the east
        {48.713, 2.208, 1561096800, 71.4723, 75.2827},
        // winter solstice week, noon sun stays low
        {48.713, 2.208, 1545393600, 72.1883, 182.6013},
        // spring, mid-afternoon
        {48.713, 2.208, 1490005680, 52.4847, 150.9578},
        // Albuquerque-like site
        {35.0, -106.0, 1567364400, 26.8417, 177.8159},
        // southern hemisphere summer: sun passes north of the site
        {-33.9, 18.4, 1547546400, 17.7179, 47.4902},
    };
    for (const auto& c : cases) {
        const SolarPosition p = solar_position(c.lat, c.lon, c.ts);
        INFO("case lat=" << c.lat << " ts=" << c.ts);
        CHECK(std::abs(p.zenith_deg - c.zen) < kTolDeg);
        CHECK(std::abs(p.azimuth_deg - c.az) < kTolDeg);
    }
}

TEST_CASE("near-zenith and below-horizon zenith angles") {
    // equinox sun nearly overhead at the equator; azimuth is ill-conditioned
    // there, so only the zenith angle is pinned down
    const SolarPosition overhead = solar_position(0.0, 0.0, 1521547620);
    CHECK(std::abs(overhead.zenith_deg - 0.1349) < kTolDeg);
    // twelve hours earlier the sun is almost at the nadir
    const SolarPosition nadir = solar_position(0.0, 0.0, 1521504420);
    CHECK(std::abs(nadir.zenith_deg - 179.6935) < kTolDeg);
}

TEST_CASE("azimuth stays in compass range over a full day") {
    const std::int64_t day = to_unix_seconds({2019, 6, 21, 0, 0, 0});
    for (int h = 0; h < 24; ++h) {
        const SolarPosition p = solar_position(48.713, 2.208, day + h * 3600);
        CHECK(p.azimuth_deg >= 0.0);
        CHECK(p.azimuth_deg < 360.0);
        CHECK(p.zenith_deg >= 0.0);
        CHECK(p.zenith_deg <= 180.0);
    }
}

TEST_CASE("clear-sky irradiance follows the cosine-attenuation law") {
    // overhead: 1098 * exp(-0.057) ~= 1037.2 W/m^2 at cos(z) = 1
    CHECK(clear_sky_ghi({0.0, 0.0}) == Catch::Approx(1098.0 * std::exp(-0.057)).margin(0.5));
    // below the horizon there is no irradiance at all
    CHECK(clear_sky_ghi({90.0, 180.0}) == 0.0);
    CHECK(clear_sky_ghi({135.0, 180.0}) == 0.0);
    // strictly decreasing with zenith angle above the horizon
    double prev = clear_sky_ghi({0.0, 0.0});
    for (double z = 5.0; z < 90.0; z += 5.0) {
        const double g = clear_sky_ghi({z, 180.0});
        CHECK(g < prev);
        CHECK(g > 0.0);
        prev = g;
    }
    // site overload agrees with the two-step computation
    const std::int64_t ts = 1561117920;
    const SolarPosition p = solar_position(48.713, 2.208, ts);
    CHECK(clear_sky_ghi(48.713, 2.208, ts) == Catch::Approx(clear_sky_ghi(p)));
}

TEST_CASE("sun ray offset on the cloud layer") {
    // zenith 45 deg, azimuth due east: the ray pierces a 1000 m layer
    // exactly 1000 m east of the observer
    const auto east = sun_layer_offset({45.0, 90.0}, 1000.0);
    REQUIRE(east.has_value());
    CHECK(east->first == Catch::Approx(1000.0).margin(1e-6));
    CHECK(east->second == Catch::Approx(0.0).margin(1e-6));

    // azimuth due north
    const auto north = sun_layer_offset({30.0, 0.0}, 2000.0);
    REQUIRE(north.has_value());
    CHECK(north->first == Catch::Approx(0.0).margin(1e-6));
    CHECK(north->second == Catch::Approx(2000.0 * std::tan(30.0 * kDegToRad)).margin(1e-6));

    // overhead sun pierces the layer at the origin
    const auto center = sun_layer_offset({0.0, 0.0}, 2000.0);
    REQUIRE(center.has_value());
    CHECK(center->first == Catch::Approx(0.0).margin(1e-9));
    CHECK(center->second == Catch::Approx(0.0).margin(1e-9));

    // grazing or below-horizon sun has no usable intersection
    CHECK_FALSE(sun_layer_offset({89.5, 90.0}, 2000.0).has_value());
    CHECK_FALSE(sun_layer_offset({120.0, 90.0}, 2000.0).has_value());
}

TEST_CASE("site coordinates are validated") {
    CHECK_THROWS_AS(solar_position(91.0, 0.0, 0), DomainError);
    CHECK_THROWS_AS(solar_position(-91.0, 0.0, 0), DomainError);
    CHECK_THROWS_AS(solar_position(0.0, 181.0, 0), DomainError);
    CHECK_THROWS_AS(solar_position(0.0, -181.0, 0), DomainError);
}
