#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "heliocast/cloudindex.hpp"

using namespace heliocast;

namespace {

// Ground truth construction: a satellite pixel sees
//   p = albedo * (1 - tau) + bright * tau,
// so with a clear history (p_min = albedo) and a frame containing at least
// one fully opaque pixel (p_max = bright), the normalized index recovers tau.
Grid2D blend_frame(const Grid2D& albedo, const Grid2D& tau, float bright) {
    Grid2D out(albedo.width, albedo.height);
    for (int y = 0; y < albedo.height; ++y)
        for (int x = 0; x < albedo.width; ++x)
            out.at(0, y, x) = albedo.at(0, y, x) * (1.0f - tau.at(0, y, x)) +
                              bright * tau.at(0, y, x);
    return out;
}

Grid2D albedo_ramp(int n) {
    Grid2D g(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            g.at(0, y, x) = 0.1f + 0.2f * static_cast<float>(x + y) / (2.0f * (n - 1));
    return g;
}

std::filesystem::path temp_file(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "heliocast_ci_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("cloud index recovers opacity once the history has seen clear ground") {
    const int n = 16;
    const Grid2D albedo = albedo_ramp(n);
    AlbedoHistory hist(n, n, 300, 10);

    // ten clear days populate the 12:00:00 slot with the bare ground
    const std::int64_t slot_ts = 43200;
    for (int d = 0; d < 10; ++d) update_history(hist, albedo, d * 86400 + slot_ts);

    // day 11: a diagonal opacity wedge that saturates in one corner
    Grid2D tau(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            tau.at(0, y, x) = std::clamp(static_cast<float>(x + y) / n - 0.2f, 0.0f, 1.0f);
    REQUIRE(tau.at(0, n - 1, n - 1) == 1.0f); // the p_max premise holds

    const Grid2D frame = blend_frame(albedo, tau, 0.9f);
    const CloudIndexResult res = cloud_index(frame, 10 * 86400 + slot_ts, hist);

    CHECK_FALSE(res.flat_warning);
    double worst = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            worst = std::max(worst, std::abs(static_cast<double>(res.map.at(0, y, x)) -
                                             tau.at(0, y, x)));
    CHECK(worst < 1e-5);
}

TEST_CASE("a pixel darker than its history clamps to zero and is tallied") {
    const int n = 8;
    AlbedoHistory hist(n, n);
    Grid2D ground(n, n, 1, 0.3f);
    update_history(hist, ground, 43200);

    Grid2D frame(n, n, 1, 0.5f);
    frame.at(0, 2, 2) = 0.1f; // darker than anything in the history
    const CloudIndexResult res = cloud_index(frame, 86400 + 43200, hist);
    CHECK(res.map.at(0, 2, 2) == 0.0f);
    CHECK(res.clamped_low == 1);
}

TEST_CASE("a flat frame has no dynamic range and warns") {
    const int n = 8;
    AlbedoHistory hist(n, n);
    Grid2D ground(n, n, 1, 0.25f);
    update_history(hist, ground, 43200);

    const CloudIndexResult res = cloud_index(ground, 86400 + 43200, hist);
    CHECK(res.flat_warning);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) CHECK(res.map.at(0, y, x) == 0.0f);
}

TEST_CASE("history keeps only the retention window per slot") {
    const int n = 4;
    AlbedoHistory hist(n, n, 300, 3); // three-day retention
    for (int d = 0; d < 6; ++d) {
        Grid2D f(n, n, 1, 1.0f - 0.1f * static_cast<float>(d)); // later days darker
        update_history(hist, f, d * 86400 + 600);
    }
    // days 3, 4, 5 survive; the minimum is day 5's 0.5
    const Grid2D pmin = hist.slot_minimum(hist.slot_of(600));
    CHECK(pmin.at(0, 0, 0) == Catch::Approx(0.5).margin(1e-6));
    CHECK(hist.slots.at(hist.slot_of(600)).size() == 3);

    // an untouched slot has no history at all
    CHECK_THROWS_AS(hist.slot_minimum(hist.slot_of(7200)), DomainError);
}

TEST_CASE("slot minimum respects masks") {
    const int n = 4;
    AlbedoHistory hist(n, n);
    Grid2D a(n, n, 1, 0.4f);
    a.set_valid(1, 1, false);
    a.at(0, 1, 1) = 0.0f; // masked, must not win the minimum
    Grid2D b(n, n, 1, 0.6f);
    update_history(hist, a, 43200);
    update_history(hist, b, 86400 + 43200);
    const Grid2D pmin = hist.slot_minimum(hist.slot_of(43200));
    CHECK(pmin.at(0, 1, 1) == Catch::Approx(0.6).margin(1e-6));
    CHECK(pmin.at(0, 0, 0) == Catch::Approx(0.4).margin(1e-6));
}

TEST_CASE("mismatched frame dimensions are rejected") {
    AlbedoHistory hist(8, 8);
    update_history(hist, Grid2D(8, 8, 1, 0.3f), 43200);
    CHECK_THROWS_AS(cloud_index(Grid2D(4, 4), 86400 + 43200, hist), DomainError);
    CHECK_THROWS_AS(update_history(hist, Grid2D(4, 4), 200), DomainError);
    CHECK_THROWS_AS(AlbedoHistory(0, 8), DomainError);
    CHECK_THROWS_AS(AlbedoHistory(8, 8, 7), DomainError);   // must divide the day
    CHECK_THROWS_AS(AlbedoHistory(8, 8, 300, 0), DomainError);
}

TEST_CASE("history survives a save and load cycle") {
    const int n = 8;
    AlbedoHistory hist(n, n, 300, 10);
    for (int d = 0; d < 4; ++d) {
        Grid2D f = albedo_ramp(n);
        f.at(0, 0, 0) = 0.05f * static_cast<float>(d + 1);
        update_history(hist, f, d * 86400 + 43200);
        update_history(hist, f, d * 86400 + 43500);
    }

    const auto path = temp_file("history.hhst");
    save_history(path.string(), hist);
    const AlbedoHistory r = load_history(path.string());

    CHECK(r.width == hist.width);
    CHECK(r.slot_period_s == hist.slot_period_s);
    CHECK(r.retention_days == hist.retention_days);
    REQUIRE(r.slots.size() == hist.slots.size());
    for (const auto& [slot, dq] : hist.slots) {
        const auto& rq = r.slots.at(slot);
        REQUIRE(rq.size() == dq.size());
        for (std::size_t i = 0; i < dq.size(); ++i) {
            CHECK(rq[i].ts == dq[i].ts);
            CHECK(rq[i].frame.values == dq[i].frame.values);
        }
    }
    // the reloaded history scores frames identically
    const Grid2D probe = blend_frame(albedo_ramp(n), Grid2D(n, n, 1, 0.5f), 0.9f);
    const auto before = cloud_index(probe, 4 * 86400 + 43200, hist);
    const auto after = cloud_index(probe, 4 * 86400 + 43200, r);
    CHECK(before.map.values == after.map.values);
}
