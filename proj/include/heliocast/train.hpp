#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "heliocast/baselines.hpp"
#include "heliocast/checkpoint.hpp"
#include "heliocast/dataset.hpp"
#include "heliocast/error.hpp"
#include "heliocast/metrics.hpp"
#include "heliocast/model.hpp"
#include "heliocast/randomfield.hpp"

namespace heliocast {

struct TrainConfig {
    int epochs = 3;
    int batch = 4;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string optimizer = "adam"; // "adam" | "sgd"
    double divergence_threshold = 1e6;
    std::uint64_t shuffle_seed = 0;

    void validate() const {
        if (epochs < 1) throw ConfigError("at least one epoch required");
        if (batch < 1) throw ConfigError("batch size must be positive");
        if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
        if (optimizer != "adam" && optimizer != "sgd")
            throw ConfigError("optimizer must be 'adam' or 'sgd'");
        if (!(divergence_threshold > 0.0)) throw ConfigError("divergence threshold must be positive");
    }
};

struct TrainLogRow {
    int epoch = 0;
    std::string split;
    int horizon_s = 0;
    double loss_total = 0.0;
    double loss_irradiance = 0.0;
    double loss_image = 0.0;
    double rmse = 0.0;
    double fs_rmse_pct = 0.0;
};

inline void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "epoch,split,horizon_s,loss_total,loss_irradiance,loss_image,rmse,fs_rmse_pct\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch,
                      r.split.c_str(), r.horizon_s, r.loss_total, r.loss_irradiance, r.loss_image,
                      r.rmse, r.fs_rmse_pct);
        os << buf << "\n";
    }
    if (!os) throw DataError("short write: " + path);
}

/// Records plus the stores needed to materialize them.  `sat` is the
/// satellite input stream (possibly variant-transformed); `targets` always
/// holds the untransformed cloud-index maps the image loss is scored on.
struct DataBundle {
    const std::vector<SampleRecord>* records = nullptr;
    const FrameStore* sky = nullptr;
    const FrameStore* sat = nullptr;
    const FrameStore* targets = nullptr;
};

/// The point prediction used for RMSE bookkeeping: scalar head in
/// deterministic mode, distribution mean in probabilistic mode.
inline double point_estimate(const Forecast& f, const ModelConfig& cfg) {
    return cfg.head_scalar ? f.ghi_hat : f.dist.mean();
}

/// Smart-persistence RMSE per horizon over a record set; the reference the
/// validation forecast skill is measured against.
inline std::vector<double> smart_persistence_rmse(const std::vector<SampleRecord>& records,
                                                  int horizons) {
    std::vector<std::vector<double>> pred(static_cast<std::size_t>(horizons)),
        truth(static_cast<std::size_t>(horizons));
    for (const auto& rec : records)
        for (std::size_t k = 0; k < rec.horizons_s.size(); ++k) {
            pred[k].push_back(smart_persistence(rec.ghi_t, rec.clear_t, rec.target_clear[k]));
            truth[k].push_back(rec.target_ghi[k]);
        }
    std::vector<double> out;
    for (int k = 0; k < horizons; ++k)
        out.push_back(pred[static_cast<std::size_t>(k)].empty()
                          ? 0.0
                          : rmse(pred[static_cast<std::size_t>(k)], truth[static_cast<std::size_t>(k)]));
    return out;
}

namespace detail {

struct AdamState {
    std::vector<nn::Tensor> m, v;
    long step = 0;
};

inline void optimizer_step(ParameterStore& ps, const std::vector<nn::Tensor>& grads,
                           const TrainConfig& tc, AdamState& st) {
    if (tc.optimizer == "sgd") {
        for (std::size_t i = 0; i < ps.entries.size(); ++i)
            for (std::size_t j = 0; j < ps.entries[i].t.size(); ++j)
                ps.entries[i].t.v[j] -= tc.lr * grads[i].v[j];
        return;
    }
    if (st.m.empty()) {
        for (const auto& e : ps.entries) {
            st.m.emplace_back(e.t.shape);
            st.v.emplace_back(e.t.shape);
        }
    }
    ++st.step;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < ps.entries.size(); ++i) {
        auto& p = ps.entries[i].t;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = grads[i].v[j];
            st.m[i].v[j] = tc.beta1 * st.m[i].v[j] + (1.0 - tc.beta1) * g;
            st.v[i].v[j] = tc.beta2 * st.v[i].v[j] + (1.0 - tc.beta2) * g * g;
            const double mh = st.m[i].v[j] / bc1;
            const double vh = st.v[i].v[j] / bc2;
            p.v[j] -= tc.lr * mh / (std::sqrt(vh) + tc.adam_eps);
        }
    }
}

struct HorizonStats {
    std::vector<std::vector<double>> pred, truth;
    explicit HorizonStats(int horizons)
        : pred(static_cast<std::size_t>(horizons)), truth(static_cast<std::size_t>(horizons)) {}
    void add(const ForecastSet& fs, const SampleRecord& rec, const ModelConfig& cfg) {
        for (std::size_t k = 0; k < fs.size(); ++k) {
            pred[k].push_back(point_estimate(fs[k], cfg));
            truth[k].push_back(rec.target_ghi[k]);
        }
    }
    double rmse_at(int k) const {
        return pred[static_cast<std::size_t>(k)].empty()
                   ? 0.0
                   : rmse(pred[static_cast<std::size_t>(k)], truth[static_cast<std::size_t>(k)]);
    }
};

inline double safe_fs(double err_model, double err_baseline) {
    // Below 1e-6 W/m^2 the reference error is floating-point noise (e.g. smart
    // persistence on synthetic clear days); skill is meaningless there.
    return err_baseline > 1e-6 ? forecast_skill(err_model, err_baseline) : 0.0;
}

} // namespace detail

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogRow> log;
    std::map<int, double> best_val_fs; // horizon_s -> best validation FS
};

/// Mini-batch training with per-epoch validation.  For every horizon the
/// parameter snapshot with the best validation forecast skill is kept
/// alongside the final parameters.  Fully deterministic for a fixed config.
inline TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, DataBundle train_data,
                         DataBundle val_data) {
    mcfg.validate();
    tcfg.validate();
    if (!train_data.records || train_data.records->empty())
        throw DataError("training stream is empty");
    if (!val_data.records || val_data.records->empty())
        throw DataError("validation stream is empty");

    ParameterStore ps = build_parameters(mcfg);
    detail::AdamState opt;
    TrainResult res;

    const std::vector<double> spm_train =
        smart_persistence_rmse(*train_data.records, mcfg.horizons);
    const std::vector<double> spm_val = smart_persistence_rmse(*val_data.records, mcfg.horizons);

    std::map<int, ParameterStore> best_params;
    std::map<int, int> best_epoch;
    std::map<int, double> best_fs;

    std::vector<std::size_t> order(train_data.records->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        std::mt19937_64 rng(tcfg.shuffle_seed * 1000003ull + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }

        detail::HorizonStats train_stats(mcfg.horizons);
        double ep_total = 0.0, ep_irr = 0.0, ep_img = 0.0;
        long ep_samples = 0;

        std::vector<nn::Tensor> batch_grads, grads;
        int in_batch = 0;
        auto flush = [&]() {
            if (in_batch == 0) return;
            for (auto& g : batch_grads)
                for (double& v : g.v) v /= static_cast<double>(in_batch);
            detail::optimizer_step(ps, batch_grads, tcfg, opt);
            batch_grads.clear();
            in_batch = 0;
        };

        for (std::size_t idx : order) {
            const SampleRecord& rec = (*train_data.records)[idx];
            const SampleData data =
                load_sample(rec, *train_data.sky, *train_data.sat, *train_data.targets, mcfg);
            ForecastSet fs;
            const LossBreakdown lb = gradients(ps, data.inputs, data.targets, mcfg, grads, &fs);
            if (!std::isfinite(lb.total) || lb.total > tcfg.divergence_threshold)
                throw TrainingFault("training diverged at epoch " + std::to_string(epoch) +
                                    " (loss " + std::to_string(lb.total) + ")");
            ep_total += lb.total;
            ep_irr += lb.irradiance;
            ep_img += lb.image;
            ++ep_samples;
            train_stats.add(fs, rec, mcfg);

            if (batch_grads.empty()) {
                batch_grads = grads;
            } else {
                for (std::size_t i = 0; i < grads.size(); ++i)
                    for (std::size_t j = 0; j < grads[i].size(); ++j)
                        batch_grads[i].v[j] += grads[i].v[j];
            }
            if (++in_batch == tcfg.batch) flush();
        }
        flush();

        // Validation pass.
        detail::HorizonStats val_stats(mcfg.horizons);
        double val_total = 0.0, val_irr = 0.0, val_img = 0.0;
        for (const auto& rec : *val_data.records) {
            const SampleData data =
                load_sample(rec, *val_data.sky, *val_data.sat, *val_data.targets, mcfg);
            const ForecastSet fs = forward(ps, data.inputs, mcfg);
            const LossBreakdown lb = loss(fs, data.targets, mcfg);
            val_total += lb.total;
            val_irr += lb.irradiance;
            val_img += lb.image;
            val_stats.add(fs, rec, mcfg);
        }
        const double nval = static_cast<double>(val_data.records->size());

        for (int k = 0; k < mcfg.horizons; ++k) {
            const int h = mcfg.horizon_s(k);
            const double tr_rmse = train_stats.rmse_at(k);
            res.log.push_back({epoch, "train", h, ep_total / ep_samples, ep_irr / ep_samples,
                               ep_img / ep_samples, tr_rmse,
                               detail::safe_fs(tr_rmse, spm_train[static_cast<std::size_t>(k)])});
            const double va_rmse = val_stats.rmse_at(k);
            const double va_fs = detail::safe_fs(va_rmse, spm_val[static_cast<std::size_t>(k)]);
            res.log.push_back({epoch, "val", h, val_total / nval, val_irr / nval, val_img / nval,
                               va_rmse, va_fs});
            if (!best_fs.count(h) || va_fs > best_fs[h]) {
                best_fs[h] = va_fs;
                best_epoch[h] = epoch;
                best_params[h] = ps; // snapshot
            }
        }
    }

    res.checkpoint.config = mcfg;
    res.checkpoint.groups["final"] = ps;
    for (const auto& [h, params] : best_params)
        res.checkpoint.groups["h" + std::to_string(h)] = params;
    res.checkpoint.best_epoch = best_epoch;
    res.best_val_fs = best_fs;
    return res;
}

} // namespace heliocast
