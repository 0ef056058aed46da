#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "heliocast/error.hpp"

namespace heliocast {

inline void check_paired(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty()) throw DomainError("metric over an empty series");
    if (pred.size() != truth.size()) throw DomainError("prediction/truth length mismatch");
}

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_paired(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_paired(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

/// Relative improvement over a reference in percent:
/// (1 - err_model / err_baseline) * 100.  Positive means the model beats the
/// baseline; the baseline error must be strictly positive.
inline double forecast_skill(double err_model, double err_baseline) {
    if (!(err_baseline > 0.0)) throw DomainError("baseline error must be positive");
    if (err_model < 0.0) throw DomainError("model error must be non-negative");
    return (1.0 - err_model / err_baseline) * 100.0;
}

/// 95th percentile of absolute errors via the nearest-rank rule
/// (rank = ceil(0.95 * n)).  Requires at least 20 values.
inline double quantile95(const std::vector<double>& abs_errors) {
    if (abs_errors.size() < 20) throw DomainError("quantile95 needs at least 20 values");
    std::vector<double> s(abs_errors);
    for (double v : s)
        if (v < 0.0) throw DomainError("absolute errors must be non-negative");
    std::sort(s.begin(), s.end());
    const std::size_t rank =
        static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(s.size())));
    return s[rank - 1];
}

/// Discrete probability distribution over equal-width bins spanning [lo, hi].
struct BinnedDistribution {
    int bin_count = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> probs;

    void validate() const {
        if (bin_count <= 0) throw DomainError("distribution needs at least one bin");
        if (!(hi > lo)) throw DomainError("distribution range must be non-empty");
        if (probs.size() != static_cast<std::size_t>(bin_count))
            throw DomainError("probability vector length mismatch");
        double s = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0)) throw DomainError("probabilities must be non-negative");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-6) throw DomainError("probabilities must sum to one");
    }

    double bin_width() const { return (hi - lo) / bin_count; }
    double bin_center(int i) const { return lo + (i + 0.5) * bin_width(); }

    /// Expectation using bin centers as representatives.
    double mean() const {
        double m = 0.0;
        for (int i = 0; i < bin_count; ++i) m += probs[static_cast<std::size_t>(i)] * bin_center(i);
        return m;
    }
};

/// Continuous ranked probability score between the distribution's step CDF
/// (mass placed at bin centers) and the target's step CDF:
/// integral of (F_model(x) - F_target(x))^2 dx, evaluated exactly as a
/// piecewise-constant integral.  Targets outside [lo, hi] are clamped to the
/// range boundary first.
inline double crps(const BinnedDistribution& dist, double target) {
    dist.validate();
    if (!std::isfinite(target)) throw DomainError("CRPS target must be finite");
    const double y = std::clamp(target, dist.lo, dist.hi);

    // Breakpoints where either CDF steps, in ascending order with y merged in.
    std::vector<std::pair<double, double>> steps; // (position, model mass)
    steps.reserve(static_cast<std::size_t>(dist.bin_count) + 1);
    for (int i = 0; i < dist.bin_count; ++i)
        steps.emplace_back(dist.bin_center(i), dist.probs[static_cast<std::size_t>(i)]);

    std::vector<double> points;
    points.reserve(steps.size() + 1);
    for (const auto& s : steps) points.push_back(s.first);
    points.push_back(y);
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());

    double integral = 0.0;
    std::size_t next_step = 0;
    double f_model = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
        while (next_step < steps.size() && steps[next_step].first <= points[k]) {
            f_model += steps[next_step].second;
            ++next_step;
        }
        const double f_target = points[k] >= y ? 1.0 : 0.0;
        const double d = f_model - f_target;
        integral += d * d * (points[k + 1] - points[k]);
    }
    return integral;
}

/// One row of an evaluation report.
struct MetricRow {
    int horizon_s = 0;
    long n = 0;
    double rmse = 0.0;
    double fs_rmse_pct = 0.0;
    double mae = 0.0;
    double q95 = 0.0;
    double crps = 0.0;
    double fs_crps_pct = 0.0;
};

inline std::string metric_csv_header() {
    return "horizon_s,n,rmse,fs_rmse_pct,mae,q95,crps,fs_crps_pct";
}

inline std::string format_metric_row(const MetricRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%ld,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f",
                  r.horizon_s, r.n, r.rmse, r.fs_rmse_pct, r.mae, r.q95, r.crps, r.fs_crps_pct);
    return buf;
}

inline void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << metric_csv_header() << "\n";
    for (const auto& r : rows) os << format_metric_row(r) << "\n";
}

} // namespace heliocast
