#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "heliocast/baselines.hpp"
#include "heliocast/imaging.hpp"
#include "heliocast/randomfield.hpp"

using namespace heliocast;

namespace {

// Smooth cloudiness map without any translation symmetry of its own.
Grid2D bumpy_map(int n, std::uint64_t seed) {
    ModeSumField field(seed, static_cast<double>(n) / 4.0, 0.3, 48);
    Grid2D g(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            g.at(0, y, x) = static_cast<float>(
                std::clamp(0.5 + field(static_cast<double>(x), static_cast<double>(y)), 0.0, 1.0));
    return g;
}

} // namespace

TEST_CASE("smart persistence scales persistence by the clear-sky trend") {
    // flat clear-sky trend: identical to plain persistence
    CHECK(smart_persistence(420.0, 800.0, 800.0) == 420.0);
    CHECK(persistence(420.0) == 420.0);
    // falling clear-sky curve drags the forecast down proportionally
    CHECK(smart_persistence(420.0, 800.0, 400.0) == Catch::Approx(210.0));
    // rising curve lifts it
    CHECK(smart_persistence(420.0, 800.0, 1000.0) == Catch::Approx(525.0));
    // an anchor with no clear-sky irradiance cannot be scaled
    CHECK_THROWS_AS(smart_persistence(420.0, 0.0, 400.0), DomainError);
    CHECK_THROWS_AS(smart_persistence(420.0, -5.0, 400.0), DomainError);
}

TEST_CASE("motion estimation recovers an integer translation exactly") {
    const int n = 48;
    const Grid2D prev = bumpy_map(n, 99);
    const Grid2D curr = translate_image(prev, 3.0, -2.0);

    CmvOptions opts;
    opts.block = 8;
    opts.search = 5;
    const auto m = detail::estimate_motion(prev, curr, opts.block, opts.search);
    CHECK(m.first == Catch::Approx(3.0));
    CHECK(m.second == Catch::Approx(-2.0));

    // a static pair reports exactly zero motion
    const auto z = detail::estimate_motion(prev, prev, opts.block, opts.search);
    CHECK(z.first == 0.0);
    CHECK(z.second == 0.0);
}

TEST_CASE("advection extrapolates the estimated motion to the horizon") {
    const int n = 48;
    const Grid2D prev = bumpy_map(n, 7);
    const Grid2D curr = translate_image(prev, 2.0, 1.0);

    CmvOptions opts;
    opts.block = 8;
    opts.search = 5;
    opts.clear_sky_ghi_h = 900.0;
    opts.attenuation_k = 0.75;

    // two observation intervals ahead: the map shifts by twice the motion
    const BaselineForecast fc = cmv_advect(prev, curr, 300.0, 600.0, opts);
    CHECK(fc.motion_px_per_obs.first == Catch::Approx(2.0));
    CHECK(fc.motion_px_per_obs.second == Catch::Approx(1.0));

    const Grid2D expect = translate_image(curr, 4.0, 2.0);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (!expect.valid(y, x)) continue;
            REQUIRE(fc.advected_map.valid(y, x));
            CHECK(fc.advected_map.at(0, y, x) == Catch::Approx(expect.at(0, y, x)).margin(1e-6));
        }

    // irradiance converts through the attenuation law at the site pixel
    const double center = (n - 1) / 2.0;
    const auto site = bilinear_sample(fc.advected_map, 0, center, center);
    REQUIRE(site.has_value());
    CHECK(fc.ghi_hat == Catch::Approx(900.0 * (1.0 - 0.75 * *site)).margin(1e-9));
}

TEST_CASE("site falls back to the current map when advection uncovers it") {
    // motion so fast the advected site pixel comes from outside the frame
    const int n = 32;
    Grid2D prev(n, n, 1, 0.0f);
    Grid2D curr(n, n, 1, 0.0f);
    // a single diagonal stripe moving +5 px per observation in x
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            prev.at(0, y, x) = (x + y) % 8 < 4 ? 0.8f : 0.1f;
            curr.at(0, y, x) = (x - 5 + y + 80) % 8 < 4 ? 0.8f : 0.1f;
        }
    CmvOptions opts;
    opts.block = 8;
    opts.search = 6;
    opts.clear_sky_ghi_h = 1000.0;

    // 20 observation intervals: displacement 100 px >> frame, so the site
    // source is far outside and the current cloudiness is used instead
    const BaselineForecast fc = cmv_advect(prev, curr, 300.0, 6000.0, opts);
    const double center = (n - 1) / 2.0;
    const auto now = bilinear_sample(curr, 0, center, center);
    REQUIRE(now.has_value());
    CHECK(fc.ghi_hat == Catch::Approx(1000.0 * (1.0 - 0.75 * *now)).margin(1e-9));
}

TEST_CASE("cloud motion validates its geometry") {
    const Grid2D a(32, 32), b(32, 32);
    CmvOptions opts; // defaults: block 16, search 8
    // 2 * 8 >= 32 - 16, so the default window does not fit a 32 px map
    CHECK_THROWS_AS(cmv_advect(a, b, 300.0, 600.0, opts), DomainError);
    opts.block = 8;
    opts.search = 5;
    CHECK_NOTHROW(cmv_advect(a, b, 300.0, 600.0, opts));
    opts.block = 2;
    CHECK_THROWS_AS(cmv_advect(a, b, 300.0, 600.0, opts), DomainError);
    opts.block = 8;
    opts.search = 0;
    CHECK_THROWS_AS(cmv_advect(a, b, 300.0, 600.0, opts), DomainError);
    opts.search = 5;
    CHECK_THROWS_AS(cmv_advect(a, b, 0.0, 600.0, opts), DomainError);
    CHECK_THROWS_AS(cmv_advect(a, b, 300.0, -60.0, opts), DomainError);
    CHECK_THROWS_AS(cmv_advect(Grid2D(16, 16), b, 300.0, 600.0, opts), DomainError);
}
