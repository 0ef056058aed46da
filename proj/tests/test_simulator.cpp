#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "heliocast/randomfield.hpp"
#include "heliocast/simulator.hpp"

using namespace heliocast;

namespace {

std::int64_t midnight(int y, int m, int d) { return to_unix_seconds({y, m, d, 0, 0, 0}); }

SceneSpec small_spec() {
    SceneSpec spec;
    spec.seed = 42;
    spec.sat_resolution = 32;
    spec.sat_extent_m = 20000.0;
    spec.sky_resolution = 32;
    spec.days = {{midnight(2024, 6, 10), Weather::broken, {8.0, 3.0}, 0.0}};
    return spec;
}

std::filesystem::path temp_dir(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "heliocast_sim_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("mode-sum random fields are deterministic and scale with sigma") {
    ModeSumField a(7, 8000.0, 1.0);
    ModeSumField b(7, 8000.0, 1.0);
    ModeSumField c(8, 8000.0, 1.0);
    double mean = 0.0, var = 0.0;
    long n = 0;
    bool any_diff = false;
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
            const double x = (i - 20) * 4000.0;
            const double y = (j - 20) * 4000.0;
            const double va = a(x, y);
            CHECK(va == b(x, y));
            if (va != c(x, y)) any_diff = true;
            mean += va;
            var += va * va;
            ++n;
        }
    CHECK(any_diff);
    mean /= n;
    var = var / n - mean * mean;
    CHECK(std::abs(mean) < 0.3);
    CHECK(std::sqrt(var) > 0.5);
    CHECK(std::sqrt(var) < 1.5);

    // doubling sigma doubles the field pointwise
    ModeSumField wide(7, 8000.0, 2.0);
    CHECK(wide(1234.0, -567.0) == Catch::Approx(2.0 * a(1234.0, -567.0)).epsilon(1e-12));
}

TEST_CASE("weather labels round-trip") {
    for (Weather w : {Weather::clear, Weather::overcast, Weather::broken})
        CHECK(weather_from_string(to_string(w)) == w);
    CHECK_THROWS_AS(weather_from_string("stormy"), DomainError);
}

TEST_CASE("scene specs are validated") {
    SceneSpec spec = small_spec();
    CHECK_NOTHROW(Scene(spec));

    SceneSpec empty = spec;
    empty.days.clear();
    CHECK_THROWS_AS(Scene(empty), ConfigError);

    SceneSpec unsorted = spec;
    unsorted.days.push_back({midnight(2024, 6, 9), Weather::clear, {0.0, 0.0}, 0.0});
    CHECK_THROWS_AS(Scene(unsorted), ConfigError);

    SceneSpec offgrid = spec;
    offgrid.days[0].start_ts += 3600; // not a UTC midnight
    CHECK_THROWS_AS(Scene(offgrid), ConfigError);

    SceneSpec badcad = spec;
    badcad.sat_cadence_s = 7; // does not divide the day
    CHECK_THROWS_AS(Scene(badcad), ConfigError);
}

TEST_CASE("rendering is a pure function of spec and time") {
    const SceneSpec spec = small_spec();
    const Scene s1(spec), s2(spec);
    const std::int64_t noon = spec.days[0].start_ts + 12 * 3600;
    CHECK(s1.render_satellite(noon).values == s2.render_satellite(noon).values);
    CHECK(s1.render_sky(noon).values == s2.render_sky(noon).values);
    CHECK(s1.irradiance(noon) == s2.irradiance(noon));

    SceneSpec other = spec;
    other.seed = 43;
    const Scene s3(other);
    CHECK(s1.render_satellite(noon).values != s3.render_satellite(noon).values);
}

TEST_CASE("satellite and sky frames encode the same cloud field") {
    SceneSpec spec = small_spec();
    spec.albedo_sigma = 0.0; // uniform ground so the blend is invertible
    spec.sky_resolution = 64;
    const Scene scene(spec);
    const std::int64_t t = spec.days[0].start_ts + 11 * 3600;

    // satellite: p = albedo * (1 - tau) + 0.9 * tau
    const Grid2D sat = scene.render_satellite(t);
    const int n = spec.sat_resolution;
    double worst_sat = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = ((j + 0.5) / n - 0.5) * spec.sat_extent_m;
            const double y = (0.5 - (i + 0.5) / n) * spec.sat_extent_m;
            const double tau_true = scene.cloud_opacity(x, y, t);
            const double tau_rec = (sat.at(0, i, j) - 0.2) / (0.9 - 0.2);
            worst_sat = std::max(worst_sat, std::abs(tau_rec - tau_true));
        }
    CHECK(worst_sat < 0.02);

    // sky: away from the sun the glare term vanishes and the blend inverts
    const Grid2D sky = scene.render_sky(t);
    const SolarPosition sun = scene.sun(t);
    const FisheyeCalibration& cal = scene.calibration();
    const double base = 0.15 + 0.45 * std::max(0.0, std::cos(sun.zenith_deg * kDegToRad));
    double worst_sky = 0.0;
    long checked = 0;
    const int m = spec.sky_resolution;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            if (!sky.valid(i, j)) continue;
            const double dx = j - cal.center_x;
            const double dy = i - cal.center_y;
            const double zen = cal.zenith_for_radius(std::hypot(dx, dy)) * kDegToRad;
            const double az = std::atan2(dx, -dy);
            const double cos_sep =
                std::cos(zen) * std::cos(sun.zenith_deg * kDegToRad) +
                std::sin(zen) * std::sin(sun.zenith_deg * kDegToRad) *
                    std::cos(az - sun.azimuth_deg * kDegToRad);
            if (cos_sep > std::cos(30.0 * kDegToRad)) continue; // skip the glare zone
            const double rho = spec.cloud_height_m * std::tan(zen);
            const double tau_true =
                scene.cloud_opacity(rho * std::sin(az), rho * std::cos(az), t);
            const double tau_rec = (sky.at(0, i, j) - base) / (0.85 - base);
            worst_sky = std::max(worst_sky, std::abs(tau_rec - tau_true));
            ++checked;
        }
    CHECK(checked > 500);
    CHECK(worst_sky < 0.02);
}

TEST_CASE("cloud drift translates satellite frames by the wind displacement") {
    SceneSpec spec = small_spec();
    spec.albedo_sigma = 0.0;
    spec.sat_resolution = 64;
    spec.sat_extent_m = 40000.0; // 625 m per pixel
    // 12.5 m/s east: exactly 6 pixels per 300 s cadence step
    spec.days = {{midnight(2024, 6, 10), Weather::broken, {12.5, 0.0}, 0.0}};
    const Scene scene(spec);

    const std::int64_t t = spec.days[0].start_ts + 10 * 3600;
    const Grid2D f0 = scene.render_satellite(t);
    const Grid2D f1 = scene.render_satellite(t + 300);
    for (int i = 0; i < 64; ++i)
        for (int j = 6; j < 64; ++j)
            CHECK(f1.at(0, i, j) == Catch::Approx(f0.at(0, i, j - 6)).margin(1e-6));
}

TEST_CASE("the sun disk sits where the ephemeris puts it") {
    SceneSpec spec = small_spec();
    spec.sky_resolution = 64;
    spec.days = {{midnight(2024, 6, 10), Weather::clear, {8.0, 3.0}, 0.0}};
    const Scene scene(spec);
    const std::int64_t t = spec.days[0].start_ts + 12 * 3600;

    const SolarPosition sun = scene.sun(t);
    REQUIRE(sun.zenith_deg < scene.calibration().max_zenith_deg());
    const FisheyeCalibration& cal = scene.calibration();
    const double r = cal.radius_for_zenith(sun.zenith_deg);
    const double px = cal.center_x + r * std::sin(sun.azimuth_deg * kDegToRad);
    const double py = cal.center_y - r * std::cos(sun.azimuth_deg * kDegToRad);

    const Grid2D sky = scene.render_sky(t);
    float best = -1.0f;
    int bi = -1, bj = -1;
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
            if (sky.valid(i, j) && sky.at(0, i, j) > best) {
                best = sky.at(0, i, j);
                bi = i;
                bj = j;
            }
    CHECK(std::abs(bj - px) < 1.5);
    CHECK(std::abs(bi - py) < 1.5);

    // an overcast sky hides the disk: little contrast anywhere
    SceneSpec dull = spec;
    dull.days[0].regime = Weather::overcast;
    const Grid2D grey = Scene(dull).render_sky(t);
    const auto ext = grey.valid_extent();
    REQUIRE(ext.has_value());
    CHECK((*ext)[1] - (*ext)[0] < 0.1f);
}

TEST_CASE("irradiance responds to the regime") {
    SceneSpec spec = small_spec();
    spec.days = {{midnight(2024, 6, 10), Weather::clear, {8.0, 3.0}, 0.0},
                 {midnight(2024, 6, 11), Weather::overcast, {8.0, 3.0}, 0.0}};
    const Scene scene(spec);

    const std::int64_t noon_clear = spec.days[0].start_ts + 12 * 3600;
    CHECK(scene.irradiance(noon_clear) == Catch::Approx(scene.clear_irradiance(noon_clear)));
    CHECK(scene.clear_irradiance(noon_clear) > 500.0);
    // night has no irradiance
    CHECK(scene.irradiance(spec.days[0].start_ts) == 0.0);

    const std::int64_t noon_grey = spec.days[1].start_ts + 12 * 3600;
    const double clear = scene.clear_irradiance(noon_grey);
    const double g = scene.irradiance(noon_grey);
    CHECK(g < 0.6 * clear);                       // heavy attenuation
    CHECK(g >= (1.0 - spec.attenuation_k) * clear); // opacity never exceeds 1
}

TEST_CASE("stream simulation writes a consistent corpus") {
    SceneSpec spec = small_spec();
    spec.sat_resolution = 16;
    spec.sky_resolution = 16;
    spec.sat_cadence_s = 600;
    spec.sky_cadence_s = 300;
    spec.days = {{midnight(2024, 6, 10), Weather::clear, {8.0, 3.0}, 0.0},
                 {midnight(2024, 6, 11), Weather::broken, {8.0, 3.0}, 0.0}};
    const Scene scene(spec);

    const auto dir = temp_dir("corpus");
    const SimulationSummary sum = simulate_streams(scene, dir.string());
    CHECK(sum.irradiance_rows == 2 * 1440);

    long sat_files = 0;
    std::set<std::int64_t> sat_ts;
    for (const auto& e : std::filesystem::directory_iterator(dir / "sat")) {
        ++sat_files;
        const std::string name = e.path().filename().string();
        REQUIRE(name.substr(0, 4) == "sat_");
        const std::int64_t ts = std::stoll(name.substr(4));
        sat_ts.insert(ts);
        CHECK(ts % spec.sat_cadence_s == 0);
        CHECK(scene.sun(ts).zenith_deg <= spec.max_render_zenith_deg);
    }
    CHECK(sat_files == sum.sat_frames);
    CHECK(sum.sat_frames > 100); // two summer days of daylight at 10 min cadence
    long sky_files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "sky"))
        ++sky_files;
    CHECK(sky_files == sum.sky_frames);

    // night frames are absent: the gate actually fired
    CHECK(sat_ts.count(spec.days[0].start_ts) == 0);

    // the irradiance file matches the regimes
    const IrradianceSeries irr = read_irradiance_csv((dir / "irradiance.csv").string());
    REQUIRE(irr.size() == 2 * 1440);
    REQUIRE(irr.has_clear());
    double clear_day_gap = 0.0;
    bool broken_day_dips = false;
    for (std::size_t i = 0; i < irr.size(); ++i) {
        CHECK(irr.ghi[i] <= irr.ghi_clear[i] + 1e-3);
        if (irr.ts[i] <= spec.days[1].start_ts)
            clear_day_gap = std::max(clear_day_gap, std::abs(irr.ghi[i] - irr.ghi_clear[i]));
        else if (irr.ghi[i] < 0.8 * irr.ghi_clear[i] && irr.ghi_clear[i] > 100.0)
            broken_day_dips = true;
    }
    CHECK(clear_day_gap < 1e-3);
    CHECK(broken_day_dips);

    // a second run reproduces the corpus byte for byte
    const auto dir2 = temp_dir("corpus2");
    simulate_streams(scene, dir2.string());
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    };
    CHECK(slurp(dir / "irradiance.csv") == slurp(dir2 / "irradiance.csv"));
    const std::int64_t probe = *sat_ts.begin();
    CHECK(slurp(dir / "sat" / ("sat_" + std::to_string(probe) + ".fgrid")) ==
          slurp(dir2 / "sat" / ("sat_" + std::to_string(probe) + ".fgrid")));
}
