#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "heliocast/metrics.hpp"

using namespace heliocast;

TEST_CASE("rmse and mae on hand-checked pairs") {
    const std::vector<double> pred{100.0, 200.0, 300.0};
    const std::vector<double> truth{110.0, 190.0, 330.0};
    // squared errors 100, 100, 900 -> mean 366.67 -> sqrt = 19.1485
    CHECK(rmse(pred, truth) == Catch::Approx(std::sqrt(1100.0 / 3.0)).epsilon(1e-12));
    CHECK(mae(pred, truth) == Catch::Approx(50.0 / 3.0).epsilon(1e-12));
    CHECK_THROWS_AS(rmse(pred, {1.0, 2.0}), DomainError);
    CHECK_THROWS_AS(mae({}, {}), DomainError);
}

TEST_CASE("forecast skill reproduces the reference working example") {
    // an error of 120.4 against a baseline error of 144.6 is a 16.7% skill
    CHECK(std::abs(forecast_skill(120.4, 144.6) - 16.7) < 0.05);
    // matching the baseline exactly means zero skill, with no rounding slack
    CHECK(forecast_skill(87.3, 87.3) == 0.0);
    // a worse-than-baseline model has negative skill
    CHECK(forecast_skill(150.0, 100.0) == Catch::Approx(-50.0));
    // a perfect model earns the full 100%
    CHECK(forecast_skill(0.0, 100.0) == Catch::Approx(100.0));
}

TEST_CASE("q95 uses the nearest-rank convention") {
    // 20 samples: rank ceil(0.95 * 20) = 19 -> 19th smallest value
    std::vector<double> errs;
    for (int i = 1; i <= 20; ++i) errs.push_back(static_cast<double>(i));
    CHECK(quantile95(errs) == Catch::Approx(19.0));

    // order does not matter
    std::vector<double> shuffled{12, 3, 19, 7, 1, 16, 9, 20, 5, 14,
                                 2,  18, 6, 11, 4, 15, 8, 13, 10, 17};
    CHECK(quantile95(shuffled) == Catch::Approx(19.0));

    // 40 samples: rank 38
    errs.clear();
    for (int i = 1; i <= 40; ++i) errs.push_back(static_cast<double>(i) * 0.5);
    CHECK(quantile95(errs) == Catch::Approx(19.0));

    // fewer than 20 samples cannot pin down a 95th percentile
    errs.resize(19);
    CHECK_THROWS_AS(quantile95(errs), DomainError);
    CHECK_THROWS_AS(quantile95({}), DomainError);
}

TEST_CASE("binned distribution bookkeeping") {
    BinnedDistribution d;
    d.bin_count = 4;
    d.lo = 0.0;
    d.hi = 8.0;
    d.probs = {0.25, 0.25, 0.25, 0.25};
    CHECK_NOTHROW(d.validate());
    CHECK(d.bin_width() == Catch::Approx(2.0));
    CHECK(d.bin_center(0) == Catch::Approx(1.0));
    CHECK(d.bin_center(3) == Catch::Approx(7.0));
    CHECK(d.mean() == Catch::Approx(4.0));

    BinnedDistribution bad = d;
    bad.probs = {0.5, 0.5, 0.25, 0.25};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad.probs = {1.5, -0.5, 0.0, 0.0};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad.probs = {0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = d;
    bad.hi = d.lo;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("crps of a one-hot forecast is the bin-quantized absolute error") {
    BinnedDistribution d;
    d.bin_count = 10;
    d.lo = 0.0;
    d.hi = 100.0;
    d.probs.assign(10, 0.0);
    d.probs[3] = 1.0; // all mass at the bin centered on 35

    // with both step functions, the squared difference integrates to the
    // distance between the steps
    CHECK(crps(d, 75.0) == Catch::Approx(40.0).margin(1e-9));
    CHECK(crps(d, 35.0) == Catch::Approx(0.0).margin(1e-9));
    CHECK(crps(d, 10.0) == Catch::Approx(25.0).margin(1e-9));
    // any target is first clamped into the supported range
    CHECK(crps(d, -50.0) == Catch::Approx(35.0).margin(1e-9));
    CHECK(crps(d, 500.0) == Catch::Approx(65.0).margin(1e-9));
    // agreement with |pred - y| never exceeds one bin width
    for (double y : {12.0, 48.0, 81.5}) {
        CHECK(std::abs(crps(d, y) - std::abs(35.0 - y)) <= d.bin_width() + 1e-9);
    }
}

TEST_CASE("crps of a uniform forecast matches the analytic value") {
    // uniform on [0, 1] scored against a target at 0: the continuous CRPS is
    // 1/3, and a 100-bin staircase approximation lands within 1e-3
    BinnedDistribution d;
    d.bin_count = 100;
    d.lo = 0.0;
    d.hi = 1.0;
    d.probs.assign(100, 0.01);
    CHECK(std::abs(crps(d, 0.0) - 1.0 / 3.0) < 1e-3);
    // by symmetry the same holds at the upper end
    CHECK(std::abs(crps(d, 1.0) - 1.0 / 3.0) < 1e-3);
    // dead-center target: CRPS of a uniform on [0,1] at 0.5 is 1/12
    CHECK(std::abs(crps(d, 0.5) - 1.0 / 12.0) < 1e-3);
    // the sharper one-hot forecast scores strictly better at its own center
    BinnedDistribution sharp = d;
    sharp.probs.assign(100, 0.0);
    sharp.probs[50] = 1.0;
    CHECK(crps(sharp, 0.505) < crps(d, 0.505));
}

TEST_CASE("metric csv rows are stable") {
    MetricRow r;
    r.horizon_s = 1800;
    r.n = 42;
    r.rmse = 120.4;
    r.fs_rmse_pct = 16.735823;
    r.mae = 80.25;
    r.q95 = 250.5;
    r.crps = 60.125;
    r.fs_crps_pct = -3.5;
    CHECK(metric_csv_header() == "horizon_s,n,rmse,fs_rmse_pct,mae,q95,crps,fs_crps_pct");
    const std::string row = format_metric_row(r);
    CHECK(row.substr(0, 8) == "1800,42,");
    CHECK(row.find("120.4") != std::string::npos);
    CHECK(row.find("16.735823") != std::string::npos);
}
