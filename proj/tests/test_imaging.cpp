#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "heliocast/imaging.hpp"

using namespace heliocast;

namespace {

// Equal-area style lens table, the same family the fixtures use.
FisheyeCalibration make_lens(int raw_size, double max_zen_deg = 78.0) {
    FisheyeCalibration cal;
    cal.center_x = (raw_size - 1) / 2.0;
    cal.center_y = (raw_size - 1) / 2.0;
    cal.assumed_cloud_height_m = 2000.0;
    const double f = 0.48 * raw_size / (2.0 * std::sin(max_zen_deg * kDegToRad / 2.0));
    for (int k = 1; k <= static_cast<int>(max_zen_deg); ++k)
        cal.radius_per_zenith.emplace_back(k, 2.0 * f * std::sin(k * kDegToRad / 2.0));
    cal.validate();
    return cal;
}

} // namespace

TEST_CASE("fisheye table validation") {
    FisheyeCalibration cal;
    cal.center_x = cal.center_y = 32.0;
    cal.radius_per_zenith = {{10.0, 5.0}};
    CHECK_THROWS_AS(cal.validate(), DomainError); // one knot is not a table
    cal.radius_per_zenith = {{10.0, 5.0}, {20.0, 5.0}};
    CHECK_THROWS_AS(cal.validate(), DomainError); // radius must increase
    cal.radius_per_zenith = {{10.0, 5.0}, {95.0, 9.0}};
    CHECK_THROWS_AS(cal.validate(), DomainError); // zenith beyond 90
    cal.radius_per_zenith = {{10.0, 5.0}, {40.0, 18.0}, {78.0, 30.0}};
    CHECK_NOTHROW(cal.validate());
}

TEST_CASE("lens radius and zenith lookups invert each other") {
    const FisheyeCalibration cal = make_lens(64);
    for (double zen = 0.5; zen < 78.0; zen += 7.3) {
        const double r = cal.radius_for_zenith(zen);
        CHECK(cal.zenith_for_radius(r) == Catch::Approx(zen).margin(1e-9));
    }
    // monotone through the whole span
    double prev = -1.0;
    for (double r = 0.0; r <= cal.max_radius_px(); r += 0.5) {
        const double z = cal.zenith_for_radius(r);
        CHECK(z >= prev);
        prev = z;
    }
}

TEST_CASE("undistortion flattens a zenith ramp and keeps compass orientation") {
    const int N = 64;
    const FisheyeCalibration cal = make_lens(N);
    // raw pixel value = zenith angle of its view ray, in degrees / 100
    Grid2D raw(N, N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double r = std::hypot(x - cal.center_x, y - cal.center_y);
            raw.at(0, y, x) = static_cast<float>(cal.zenith_for_radius(r) / 100.0);
        }

    const int out_n = 48;
    const Grid2D out = undistort_sky(raw, cal, out_n);
    const double h = cal.assumed_cloud_height_m;
    const double extent = 2.0 * h * std::tan(cal.max_zenith_deg() * kDegToRad);
    long valid = 0;
    for (int i = 0; i < out_n; ++i)
        for (int j = 0; j < out_n; ++j) {
            const double xe = ((j + 0.5) / out_n - 0.5) * extent;
            const double yn = (0.5 - (i + 0.5) / out_n) * extent;
            const double zen = std::atan2(std::hypot(xe, yn), h) * kRadToDeg;
            if (zen > cal.max_zenith_deg()) {
                CHECK_FALSE(out.valid(i, j));
                continue;
            }
            ++valid;
            REQUIRE(out.valid(i, j));
            CHECK(out.at(0, i, j) == Catch::Approx(zen / 100.0).margin(0.01));
        }
    CHECK(valid > out_n * out_n / 2); // the view disk covers most of the square
    CHECK_FALSE(out.valid(0, 0));     // corners look beyond the lens limit

    // a bright blob east of the optical axis stays east after reprojection
    Grid2D raw_blob(N, N);
    const double r_east = cal.radius_for_zenith(40.0);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double d = std::hypot(x - (cal.center_x + r_east), y - cal.center_y);
            raw_blob.at(0, y, x) = static_cast<float>(std::exp(-d * d / 18.0));
        }
    const Grid2D blob = undistort_sky(raw_blob, cal, out_n);
    float best = -1.0f;
    int bi = -1, bj = -1;
    for (int i = 0; i < out_n; ++i)
        for (int j = 0; j < out_n; ++j)
            if (blob.valid(i, j) && blob.at(0, i, j) > best) {
                best = blob.at(0, i, j);
                bi = i;
                bj = j;
            }
    CHECK(bj > out_n / 2 + 2);                  // east half
    CHECK(std::abs(bi - out_n / 2) <= 2);       // on the east-west axis
}

TEST_CASE("undistortion validates its arguments") {
    const FisheyeCalibration cal = make_lens(64);
    const Grid2D raw(64, 64);
    CHECK_THROWS_AS(undistort_sky(raw, cal, 4), DomainError);
    CHECK_THROWS_AS(undistort_sky(raw, cal, 48, 85.0), DomainError); // beyond the table
    FisheyeCalibration off = cal;
    off.center_x = 200.0;
    CHECK_THROWS_AS(undistort_sky(raw, off, 48), DomainError);
}

TEST_CASE("polar resampling commutes with rotation about the center") {
    const int N = 129;            // odd side centers the axis on a pixel
    const double c = (N - 1) / 2.0;
    const int R = 64, A = 128;
    const double lambda = 64.0;   // gentle band-limited field
    auto field = [&](double x, double y) {
        return 0.5 + 0.15 * std::cos(2.0 * kPi * x / lambda) +
               0.15 * std::sin(2.0 * kPi * y / lambda);
    };

    const int k = 9;                       // rotate by 9 angular bins
    const double delta = k * 2.0 * kPi / A;
    Grid2D img(N, N), rot(N, N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double dx = x - c, dy = y - c;
            img.at(0, y, x) = static_cast<float>(field(dx, dy));
            // the same scene rotated by delta about the center
            const double rx = dx * std::cos(delta) + dy * std::sin(delta);
            const double ry = -dx * std::sin(delta) + dy * std::cos(delta);
            rot.at(0, y, x) = static_cast<float>(field(rx, ry));
        }

    const Grid2D p0 = spin_transform(img, c, c, R, A);
    const Grid2D p1 = spin_transform(rot, c, c, R, A);
    double worst = 0.0;
    for (int r = 0; r < R; ++r)
        for (int a = 0; a < A; ++a) {
            REQUIRE(p0.valid(r, a));
            REQUIRE(p1.valid(r, a));
            const int a_shift = (a - k + A) % A;
            worst = std::max(worst,
                             std::abs(static_cast<double>(p1.at(0, r, a)) - p0.at(0, r, a_shift)));
        }
    CHECK(worst < 1e-3);
}

TEST_CASE("polar round-trip reconstructs an off-center blob") {
    const int N = 101;
    const double c = (N - 1) / 2.0;
    const double sigma = 15.0;
    Grid2D img(N, N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double d2 = (x - c - 10.0) * (x - c - 10.0) + (y - c - 6.0) * (y - c - 6.0);
            img.at(0, y, x) = static_cast<float>(std::exp(-d2 / (2.0 * sigma * sigma)));
        }

    const Grid2D polar = spin_transform(img, c, c, 64, 128);
    const Grid2D back = spin_inverse(polar, c, c, N);
    const double r_max = c;
    double worst = 0.0;
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) {
            const double rho = std::hypot(x - c, y - c);
            if (rho > 0.8 * r_max) continue;
            REQUIRE(back.valid(y, x));
            worst = std::max(worst,
                             std::abs(static_cast<double>(back.at(0, y, x)) - img.at(0, y, x)));
        }
    CHECK(worst < 0.02);
    // pixels beyond the polar footprint are masked, not extrapolated
    CHECK_FALSE(back.valid(0, 0));
}

TEST_CASE("polar transform validates geometry") {
    const Grid2D img(32, 32);
    CHECK_THROWS_AS(spin_transform(img, 15.5, 15.5, 1, 64), DomainError);
    CHECK_THROWS_AS(spin_transform(img, 15.5, 15.5, 16, 3), DomainError);
    CHECK_THROWS_AS(spin_transform(img, 0.0, 15.5, 16, 64), DomainError); // center on edge
    CHECK_THROWS_AS(spin_transform(img, 40.0, 15.5, 16, 64), DomainError);
}

TEST_CASE("center closeup doubles the scale of a linear ramp exactly") {
    const int N = 32;
    const double a = 0.2, b = 0.01, cc = -0.005;
    Grid2D img(N, N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) img.at(0, y, x) = static_cast<float>(a + b * x + cc * y);

    const Grid2D out = center_closeup(img);
    REQUIRE(out.width == N);
    REQUIRE(out.height == N);
    const int o = N / 4;
    for (int i = 1; i < N - 1; ++i)
        for (int j = 1; j < N - 1; ++j) {
            const double sx = o + (j + 0.5) / 2.0 - 0.5;
            const double sy = o + (i + 0.5) / 2.0 - 0.5;
            CHECK(out.at(0, i, j) == Catch::Approx(a + b * sx + cc * sy).margin(1e-5));
        }
    CHECK_THROWS_AS(center_closeup(Grid2D(31, 32)), DomainError);
    CHECK_THROWS_AS(center_closeup(Grid2D(32, 17)), DomainError);
}

TEST_CASE("anti-aliased downscale") {
    SECTION("keeps constants and validates the factor") {
        Grid2D img(8, 8, 1, 0.7f);
        const Grid2D out = downscale(img, 2);
        REQUIRE(out.width == 4);
        REQUIRE(out.height == 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(out.at(0, y, x) == Catch::Approx(0.7).margin(1e-6));
        CHECK_THROWS_AS(downscale(img, 1), DomainError);
        CHECK_THROWS_AS(downscale(img, 3), DomainError); // 3 does not divide 8
    }
    SECTION("preserves linear ramps away from the border") {
        const int N = 16;
        Grid2D img(N, N);
        for (int y = 0; y < N; ++y)
            for (int x = 0; x < N; ++x) img.at(0, y, x) = static_cast<float>(x * 0.125);
        const Grid2D out = downscale(img, 2);
        for (int y = 1; y < out.height - 1; ++y)
            for (int x = 1; x < out.width - 1; ++x)
                CHECK(out.at(0, y, x) == Catch::Approx(2 * x * 0.125).margin(1e-6));
    }
    SECTION("masked regions do not bleed into valid pixels") {
        Grid2D img(8, 8, 1, 2.0f);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 4; ++x) img.set_valid(y, x, false);
        const Grid2D out = downscale(img, 2);
        for (int y = 0; y < 4; ++y) {
            CHECK_FALSE(out.valid(y, 0)); // stencil fully inside the masked half
            CHECK(out.valid(y, 2));
            CHECK(out.at(0, y, 2) == Catch::Approx(2.0).margin(1e-6));
            CHECK(out.at(0, y, 3) == Catch::Approx(2.0).margin(1e-6));
        }
    }
}

TEST_CASE("translation moves content by the requested offset") {
    const int N = 12;
    Grid2D img(N, N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) img.at(0, y, x) = static_cast<float>(y * N + x);

    SECTION("integer shifts are exact") {
        const Grid2D out = translate_image(img, 3.0, 2.0);
        for (int y = 0; y < N; ++y)
            for (int x = 0; x < N; ++x) {
                if (x >= 3 && y >= 2) {
                    REQUIRE(out.valid(y, x));
                    CHECK(out.at(0, y, x) == img.at(0, y - 2, x - 3));
                } else {
                    CHECK_FALSE(out.valid(y, x));
                }
            }
    }
    SECTION("fractional shifts interpolate a linear ramp exactly") {
        const Grid2D out = translate_image(img, -0.5, 0.25);
        for (int y = 1; y < N - 1; ++y)
            for (int x = 1; x < N - 1; ++x) {
                REQUIRE(out.valid(y, x));
                CHECK(out.at(0, y, x) ==
                      Catch::Approx((y - 0.25) * N + (x + 0.5)).margin(1e-4));
            }
    }
}
