#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/grid.hpp"
#include "heliocast/metrics.hpp"
#include "heliocast/nn/graph.hpp"
#include "heliocast/nn/tensor.hpp"
#include "heliocast/randomfield.hpp"

namespace heliocast {

struct ModelConfig {
    int input_resolution = 128;
    std::vector<int> encoder_channels = {8, 16, 32};
    int latent_channels = 64;
    int horizons = 6;
    int horizon_step_s = 600;
    int frames = 5;
    int bin_count = 100;
    bool head_cloud_map = true;
    bool head_scalar = true;
    bool head_distribution = false;
    bool input_sky = true;
    bool input_sat = true;
    bool input_ic = false;
    double alpha = 5.0;
    std::string image_loss = "mae"; // "mae" | "mse"
    std::uint64_t seed = 0;
    // Irradiance range of the dataset the model was built for; bin targets
    // and the scalar-head scale both derive from it.
    double bin_lo = 0.0;
    double bin_hi = 1200.0;

    double ghi_scale() const { return bin_hi; }

    void validate() const {
        if (!input_sky && !input_sat)
            throw ConfigError("at least one image modality (sky or satellite) must be enabled");
        if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
        if (alpha > 0.0 && !head_cloud_map)
            throw ConfigError("a positive alpha requires the cloud-map head");
        if (head_scalar == head_distribution)
            throw ConfigError("exactly one irradiance head (scalar or distribution) must be enabled");
        if (encoder_channels.empty()) throw ConfigError("encoder needs at least one stage");
        for (int c : encoder_channels)
            if (c < 1) throw ConfigError("encoder widths must be positive");
        if (latent_channels < 1) throw ConfigError("latent width must be positive");
        if (horizons < 1) throw ConfigError("at least one horizon required");
        if (horizon_step_s < 1) throw ConfigError("horizon step must be positive");
        if (frames < 3) throw ConfigError("temporal encoder needs at least 3 frames");
        if (bin_count < 2) throw ConfigError("bin count must be at least 2");
        if (!(bin_hi > bin_lo)) throw ConfigError("bin range must be non-empty");
        if (image_loss != "mae" && image_loss != "mse")
            throw ConfigError("image_loss must be 'mae' or 'mse'");
        int r = input_resolution;
        for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
            if (r < 2 || r % 2 != 0)
                throw ConfigError("input resolution must halve cleanly through every encoder stage");
            r /= 2;
        }
        if (r < 1) throw ConfigError("latent spatial size collapsed to zero");
    }

    int horizon_s(int k) const { return (k + 1) * horizon_step_s; }
    int latent_side() const {
        int r = input_resolution;
        for (std::size_t i = 0; i < encoder_channels.size(); ++i) r /= 2;
        return r;
    }
    int stream_in_channels() const { return 1 + (input_ic ? 1 : 0); }
    int concat_channels() const {
        return ((input_sky ? 1 : 0) + (input_sat ? 1 : 0)) * encoder_channels.back();
    }
};

/// Named parameter tensors in a fixed creation order.
struct ParameterStore {
    struct Entry {
        std::string name;
        nn::Tensor t;
    };
    std::vector<Entry> entries;
    std::map<std::string, std::size_t> by_name;

    std::size_t add(const std::string& name, nn::Tensor t) {
        if (by_name.count(name)) throw DomainError("duplicate parameter name: " + name);
        by_name[name] = entries.size();
        entries.push_back({name, std::move(t)});
        return entries.size() - 1;
    }
    const nn::Tensor& get(const std::string& name) const {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw DomainError("unknown parameter: " + name);
        return entries[it->second].t;
    }
    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries) n += e.t.size();
        return n;
    }
};

/// Per-sample model inputs: frame tensors are [1,R,R] in [0, 1]; ic holds the
/// normalized irradiance scalar aligned with each frame.
struct SampleInputs {
    std::vector<nn::Tensor> sky;
    std::vector<nn::Tensor> sat;
    std::vector<double> ic;
};

struct SampleTargets {
    std::vector<nn::Tensor> maps;        // per horizon, [1,R,R]
    std::vector<nn::Tensor> map_weights; // per horizon, same shape; 0 drops a pixel
    std::vector<double> ghi;             // per horizon, W/m^2
    std::vector<int> bins;               // per horizon
};

struct Forecast {
    Grid2D ci_map;
    double ghi_hat = 0.0;
    BinnedDistribution dist;
};
using ForecastSet = std::vector<Forecast>;

struct LossBreakdown {
    double total = 0.0;
    double irradiance = 0.0;
    double image = 0.0;
};

namespace detail {

inline nn::Tensor init_tensor(std::vector<int> shape, double fan_in, std::mt19937_64& rng) {
    nn::Tensor t(std::move(shape));
    const double std_dev = std::sqrt(1.0 / std::max(1.0, fan_in));
    for (double& v : t.v) v = std_dev * gaussian01(rng);
    return t;
}

} // namespace detail

/// Builds all parameters (every head is always parameterized; disabled heads
/// simply never reach the loss, so their gradients are exactly zero).
inline ParameterStore build_parameters(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    ParameterStore ps;
    auto conv = [&](const std::string& name, int co, int ci, int kh, int kw) {
        ps.add(name + "/w", detail::init_tensor({co, ci, kh, kw}, ci * kh * kw, rng));
        ps.add(name + "/b", nn::Tensor({co}));
    };

    const int in_ch = cfg.stream_in_channels();
    std::vector<std::string> streams;
    if (cfg.input_sky) streams.push_back("sky");
    if (cfg.input_sat) streams.push_back("sat");
    for (const auto& s : streams) {
        int ci = in_ch;
        for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
            conv("enc/" + s + "/" + std::to_string(i), cfg.encoder_channels[i], ci, 3, 3);
            ci = cfg.encoder_channels[i];
        }
    }

    const int cc = cfg.concat_channels();
    const int L = cfg.latent_channels;
    ps.add("temporal/0/w", detail::init_tensor({L, cc, 3, 3, 3}, cc * 27, rng));
    ps.add("temporal/0/b", nn::Tensor({L}));
    const int t_rem = cfg.frames - 2; // length after the first valid conv
    ps.add("temporal/1/w", detail::init_tensor({L, L, t_rem, 3, 3}, L * t_rem * 9, rng));
    ps.add("temporal/1/b", nn::Tensor({L}));

    for (const std::string g : {"xz", "hz", "xr", "hr", "xh", "hh"})
        ps.add("gru/" + g + "/w", detail::init_tensor({L, L, 3, 3}, L * 9, rng));
    for (const std::string g : {"z", "r", "h"}) ps.add("gru/" + g + "/b", nn::Tensor({L}));

    // Decoder mirrors the encoder widths back up to full resolution.
    int ci = L;
    for (int i = static_cast<int>(cfg.encoder_channels.size()) - 1; i >= 0; --i) {
        const int co = cfg.encoder_channels[static_cast<std::size_t>(i)];
        const std::string name = "dec/" + std::to_string(cfg.encoder_channels.size() - 1 - static_cast<std::size_t>(i));
        ps.add(name + "/w", detail::init_tensor({ci, co, 4, 4}, ci * 16, rng));
        ps.add(name + "/b", nn::Tensor({co}));
        ci = co;
    }
    conv("dec/out", 1, ci, 1, 1);

    ps.add("head/ghi/w", detail::init_tensor({1, L}, L, rng));
    ps.add("head/ghi/b", nn::Tensor({1}));
    ps.add("head/dist/w", detail::init_tensor({cfg.bin_count, L}, L, rng));
    ps.add("head/dist/b", nn::Tensor({cfg.bin_count}));
    return ps;
}

namespace detail {

struct HorizonNodes {
    int map = -1;  // [1,R,R] after sigmoid
    int ghi = -1;  // [1] normalized (multiply by ghi_scale for W/m^2)
    int logp = -1; // [bins]
};

struct BuiltGraph {
    std::map<std::string, int> param_ids;
    std::vector<HorizonNodes> horizons;
};

/// Records the full forward computation on the tape.  Disabled modalities are
/// never read, so outputs are bit-invariant to their contents.
inline BuiltGraph build_forward(nn::Graph& g, const ParameterStore& ps, const SampleInputs& in,
                                const ModelConfig& cfg, bool requires_grad) {
    cfg.validate();
    BuiltGraph built;
    for (const auto& e : ps.entries) built.param_ids[e.name] = g.leaf(e.t, requires_grad);
    auto pid = [&](const std::string& n) {
        const auto it = built.param_ids.find(n);
        if (it == built.param_ids.end()) throw DomainError("missing parameter: " + n);
        return it->second;
    };

    const int R = cfg.input_resolution;
    auto check_frames = [&](const std::vector<nn::Tensor>& frames, const char* what) {
        if (static_cast<int>(frames.size()) != cfg.frames)
            throw DomainError(std::string(what) + ": expected " + std::to_string(cfg.frames) +
                              " frames");
        for (const auto& f : frames)
            if (f.shape != std::vector<int>{1, R, R})
                throw DomainError(std::string(what) + ": frame shape mismatch, got " +
                                  f.shape_str());
    };
    if (cfg.input_sky) check_frames(in.sky, "sky stream");
    if (cfg.input_sat) check_frames(in.sat, "satellite stream");
    if (cfg.input_ic && static_cast<int>(in.ic.size()) != cfg.frames)
        throw DomainError("irradiance channel: expected one scalar per frame");

    auto encode_stream = [&](const std::string& s, const std::vector<nn::Tensor>& frames,
                             int frame_idx) {
        int x = g.leaf(frames[static_cast<std::size_t>(frame_idx)], false);
        if (cfg.input_ic) {
            nn::Tensor plane({1, R, R}, in.ic[static_cast<std::size_t>(frame_idx)]);
            x = g.concat_channels({x, g.leaf(std::move(plane), false)});
        }
        for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
            x = g.conv2d(x, pid("enc/" + s + "/" + std::to_string(i) + "/w"),
                         pid("enc/" + s + "/" + std::to_string(i) + "/b"), 2, 1);
            x = g.tanh_(x);
        }
        return x;
    };

    std::vector<int> per_frame;
    for (int t = 0; t < cfg.frames; ++t) {
        std::vector<int> parts;
        if (cfg.input_sky) parts.push_back(encode_stream("sky", in.sky, t));
        if (cfg.input_sat) parts.push_back(encode_stream("sat", in.sat, t));
        per_frame.push_back(parts.size() == 1 ? parts[0] : g.concat_channels(parts));
    }

    int seq = g.stack_time(per_frame); // [cc, T, h, w]
    seq = g.tanh_(g.conv3d(seq, pid("temporal/0/w"), pid("temporal/0/b"), 1, 1));
    seq = g.tanh_(g.conv3d(seq, pid("temporal/1/w"), pid("temporal/1/b"), 1, 1));
    const int side = cfg.latent_side();
    const int latent = g.reshape(seq, {cfg.latent_channels, side, side});

    auto gru_conv = [&](int x, const std::string& wx, int h, const std::string& wh,
                        const std::string& b) {
        // Bias enters once, on the input-side convolution.
        const int zb = g.leaf(nn::Tensor({cfg.latent_channels}), false);
        const int cx = g.conv2d(x, pid("gru/" + wx + "/w"), pid("gru/" + b + "/b"), 1, 1);
        const int ch = g.conv2d(h, pid("gru/" + wh + "/w"), zb, 1, 1);
        return g.add(cx, ch);
    };

    int h = g.leaf(nn::Tensor({cfg.latent_channels, side, side}), false);
    for (int k = 0; k < cfg.horizons; ++k) {
        const int z = g.sigmoid_(gru_conv(latent, "xz", h, "hz", "z"));
        const int r = g.sigmoid_(gru_conv(latent, "xr", h, "hr", "r"));
        const int rh = g.mul(r, h);
        const int cand = g.tanh_(gru_conv(latent, "xh", rh, "hh", "h"));
        // h' = (1 - z) * h + z * cand
        h = g.add(h, g.mul(z, g.sub(cand, h)));

        HorizonNodes out;
        int d = h;
        for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
            d = g.conv2d_transpose(d, pid("dec/" + std::to_string(i) + "/w"),
                                   pid("dec/" + std::to_string(i) + "/b"), 2, 1);
            d = g.tanh_(d);
        }
        d = g.conv2d(d, pid("dec/out/w"), pid("dec/out/b"), 1, 0);
        out.map = g.sigmoid_(d);

        const int pooled = g.global_avg_pool(h);
        out.ghi = g.softplus_(g.linear(pooled, pid("head/ghi/w"), pid("head/ghi/b")));
        out.logp = g.log_softmax(g.linear(pooled, pid("head/dist/w"), pid("head/dist/b")));
        built.horizons.push_back(out);
    }
    return built;
}

inline ForecastSet extract_forecasts(const nn::Graph& g, const BuiltGraph& built,
                                     const ModelConfig& cfg) {
    ForecastSet fs;
    for (const auto& hn : built.horizons) {
        Forecast f;
        f.ci_map = nn::grid_from_tensor(g.value(hn.map));
        f.ci_map.value_range = {0.0f, 1.0f};
        f.ghi_hat = g.value(hn.ghi).v[0] * cfg.ghi_scale();
        f.dist.bin_count = cfg.bin_count;
        f.dist.lo = cfg.bin_lo;
        f.dist.hi = cfg.bin_hi;
        f.dist.probs.resize(static_cast<std::size_t>(cfg.bin_count));
        const nn::Tensor& lp = g.value(hn.logp);
        double sum = 0.0;
        for (int i = 0; i < cfg.bin_count; ++i) {
            f.dist.probs[static_cast<std::size_t>(i)] = std::exp(lp.v[static_cast<std::size_t>(i)]);
            sum += f.dist.probs[static_cast<std::size_t>(i)];
        }
        for (double& p : f.dist.probs) p /= sum;
        fs.push_back(std::move(f));
    }
    return fs;
}

inline void check_targets(const SampleTargets& tg, const ModelConfig& cfg) {
    const auto H = static_cast<std::size_t>(cfg.horizons);
    if (tg.ghi.size() != H || tg.bins.size() != H)
        throw DomainError("targets must cover every horizon");
    if (cfg.alpha > 0.0 && (tg.maps.size() != H || tg.map_weights.size() != H))
        throw DomainError("image targets must cover every horizon when alpha > 0");
    for (double y : tg.ghi)
        if (!std::isfinite(y)) throw TrainingFault("non-finite irradiance target");
    for (std::size_t k = 0; k < tg.maps.size(); ++k)
        for (double v : tg.maps[k].v)
            if (!std::isfinite(v)) throw TrainingFault("non-finite cloud-map target");
    for (int b : tg.bins)
        if (b < 0 || b >= cfg.bin_count) throw DomainError("bin target out of range");
}

/// Attaches the training objective to a built graph; returns
/// (total, irradiance, image) node ids.
inline std::array<int, 3> build_loss(nn::Graph& g, const BuiltGraph& built,
                                     const SampleTargets& tg, const ModelConfig& cfg) {
    check_targets(tg, cfg);
    std::vector<int> irr_terms, img_terms;
    for (int k = 0; k < cfg.horizons; ++k) {
        const auto& hn = built.horizons[static_cast<std::size_t>(k)];
        if (cfg.head_scalar) {
            nn::Tensor target({1}, tg.ghi[static_cast<std::size_t>(k)] / cfg.ghi_scale());
            irr_terms.push_back(g.mse_const(hn.ghi, std::move(target), nn::Tensor{}));
        } else {
            irr_terms.push_back(
                g.scale(g.pick(hn.logp, tg.bins[static_cast<std::size_t>(k)]), -1.0));
        }
        if (cfg.alpha > 0.0) {
            nn::Tensor target = tg.maps[static_cast<std::size_t>(k)];
            nn::Tensor weights = tg.map_weights[static_cast<std::size_t>(k)];
            img_terms.push_back(cfg.image_loss == "mse"
                                    ? g.mse_const(hn.map, std::move(target), std::move(weights))
                                    : g.mae_const(hn.map, std::move(target), std::move(weights)));
        }
    }
    const double inv_h = 1.0 / cfg.horizons;
    const int l_irr = g.affine_combine(irr_terms, std::vector<double>(irr_terms.size(), inv_h));
    int l_img = -1;
    int total;
    if (!img_terms.empty()) {
        l_img = g.affine_combine(img_terms, std::vector<double>(img_terms.size(), inv_h));
        total = g.affine_combine({l_irr, l_img}, {1.0, cfg.alpha});
    } else {
        total = g.affine_combine({l_irr}, {1.0});
    }
    return {total, l_irr, l_img};
}

} // namespace detail

inline ForecastSet forward(const ParameterStore& ps, const SampleInputs& in,
                           const ModelConfig& cfg) {
    nn::Graph g;
    const auto built = detail::build_forward(g, ps, in, cfg, false);
    return detail::extract_forecasts(g, built, cfg);
}

/// Inference entry point: forward without gradient bookkeeping.
inline ForecastSet predict(const ParameterStore& ps, const SampleInputs& in,
                           const ModelConfig& cfg) {
    return forward(ps, in, cfg);
}

inline std::vector<ForecastSet> predict_batch(const ParameterStore& ps,
                                              const std::vector<SampleInputs>& batch,
                                              const ModelConfig& cfg) {
    std::vector<ForecastSet> out;
    out.reserve(batch.size());
    for (const auto& in : batch) out.push_back(predict(ps, in, cfg));
    return out;
}

/// Loss recomputed from decoded forecasts (reporting path; the training path
/// evaluates the same expressions on the tape).
inline LossBreakdown loss(const ForecastSet& fs, const SampleTargets& tg, const ModelConfig& cfg) {
    cfg.validate();
    detail::check_targets(tg, cfg);
    if (static_cast<int>(fs.size()) != cfg.horizons)
        throw DomainError("forecast count does not match the configured horizons");
    LossBreakdown lb;
    for (int k = 0; k < cfg.horizons; ++k) {
        const auto& f = fs[static_cast<std::size_t>(k)];
        if (!std::isfinite(f.ghi_hat)) throw TrainingFault("non-finite forecast");
        if (cfg.head_scalar) {
            const double d = (f.ghi_hat - tg.ghi[static_cast<std::size_t>(k)]) / cfg.ghi_scale();
            lb.irradiance += d * d;
        } else {
            const double p =
                std::max(f.dist.probs[static_cast<std::size_t>(tg.bins[static_cast<std::size_t>(k)])],
                         1e-300);
            lb.irradiance += -std::log(p);
        }
        if (cfg.alpha > 0.0) {
            const nn::Tensor& target = tg.maps[static_cast<std::size_t>(k)];
            const nn::Tensor& wts = tg.map_weights[static_cast<std::size_t>(k)];
            double acc = 0.0, wsum = 0.0;
            for (std::size_t i = 0; i < target.size(); ++i) {
                const double w = wts.size() ? wts.v[i] : 1.0;
                if (w <= 0.0) continue;
                const double d = static_cast<double>(f.ci_map.values[i]) - target.v[i];
                acc += w * (cfg.image_loss == "mse" ? d * d : std::abs(d));
                wsum += w;
            }
            if (wsum <= 0.0) throw DomainError("image target fully masked");
            lb.image += acc / wsum;
        }
    }
    lb.irradiance /= cfg.horizons;
    lb.image /= cfg.horizons;
    lb.total = lb.irradiance + cfg.alpha * lb.image;
    if (!std::isfinite(lb.total)) throw TrainingFault("non-finite loss");
    return lb;
}

/// Exact reverse-mode gradients of the total loss for every parameter, in
/// store order.  Parameters with no path to the loss get exact zeros.  The
/// forward outputs can be captured via `out_forecasts` to avoid a second
/// pass.
inline LossBreakdown gradients(const ParameterStore& ps, const SampleInputs& in,
                               const SampleTargets& tg, const ModelConfig& cfg,
                               std::vector<nn::Tensor>& grads,
                               ForecastSet* out_forecasts = nullptr) {
    nn::Graph g;
    const auto built = detail::build_forward(g, ps, in, cfg, true);
    if (out_forecasts) *out_forecasts = detail::extract_forecasts(g, built, cfg);
    const auto [total, l_irr, l_img] = detail::build_loss(g, built, tg, cfg);
    LossBreakdown lb;
    lb.total = g.value(total).v[0];
    lb.irradiance = g.value(l_irr).v[0];
    lb.image = l_img >= 0 ? g.value(l_img).v[0] : 0.0;
    if (!std::isfinite(lb.total)) throw TrainingFault("non-finite loss");
    g.backward(total);
    grads.clear();
    grads.reserve(ps.entries.size());
    for (const auto& e : ps.entries) {
        const int id = built.param_ids.at(e.name);
        const nn::Tensor& gt = g.grad(id);
        grads.push_back(gt.size() ? gt : nn::Tensor(e.t.shape));
    }
    return lb;
}

} // namespace heliocast
