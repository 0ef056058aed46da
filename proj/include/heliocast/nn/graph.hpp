#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/nn/tensor.hpp"

namespace heliocast::nn {

/// Define-by-run reverse-mode autodiff tape.  Every operation evaluates
/// eagerly and records a closure that scatters the output gradient back to
/// its inputs; backward() replays the tape in reverse creation order.
/// Activations are smooth (tanh, sigmoid, softplus) so analytic gradients
/// can be validated against central finite differences.
class Graph {
public:
    struct Node {
        Tensor val;
        Tensor grad;
        bool requires_grad = false;
        std::function<void()> backprop; // null for leaves
    };

    int leaf(Tensor value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    // ---- elementwise ----

    int add(int a, int b) {
        return binary(a, b, [](double x, double y) { return x + y; },
                      [](double, double, double g) { return std::pair{g, g}; });
    }

    int sub(int a, int b) {
        return binary(a, b, [](double x, double y) { return x - y; },
                      [](double, double, double g) { return std::pair{g, -g}; });
    }

    int mul(int a, int b) {
        return binary(a, b, [](double x, double y) { return x * y; },
                      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
    }

    int scale(int a, double c) {
        Tensor out = val(a);
        for (double& x : out.v) x *= c;
        const int id = emit(std::move(out), needs(a));
        record(id, [this, a, c, id] {
            if (!needs(a)) return;
            auto& ga = grad_ref(a);
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (std::size_t i = 0; i < go.size(); ++i) ga.v[i] += c * go.v[i];
        });
        return id;
    }

    int add_scalar(int a, double c) {
        Tensor out = val(a);
        for (double& x : out.v) x += c;
        const int id = emit(std::move(out), needs(a));
        record(id, [this, a, id] {
            if (!needs(a)) return;
            auto& ga = grad_ref(a);
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (std::size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
        });
        return id;
    }

    int tanh_(int a) {
        return unary(a, [](double x) { return std::tanh(x); },
                     [](double, double y, double g) { return g * (1.0 - y * y); });
    }

    int sigmoid_(int a) {
        return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                     [](double, double y, double g) { return g * y * (1.0 - y); });
    }

    int softplus_(int a) {
        return unary(a,
                     [](double x) {
                         if (x > 30.0) return x;
                         if (x < -30.0) return std::exp(x);
                         return std::log1p(std::exp(x));
                     },
                     [](double x, double, double g) { return g / (1.0 + std::exp(-x)); });
    }

    // ---- shape ----

    int reshape(int a, std::vector<int> shape) {
        if (Tensor::count(shape) != val(a).size())
            throw DomainError("reshape changes element count");
        Tensor out = val(a);
        out.shape = std::move(shape);
        const int id = emit(std::move(out), needs(a));
        record(id, [this, a, id] {
            if (!needs(a)) return;
            auto& ga = grad_ref(a);
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (std::size_t i = 0; i < go.size(); ++i) ga.v[i] += go.v[i];
        });
        return id;
    }

    /// [Ci,H,W] x k -> [sum Ci, H, W]
    int concat_channels(const std::vector<int>& xs) {
        if (xs.empty()) throw DomainError("concat of nothing");
        const Tensor& first = val(xs[0]);
        if (first.shape.size() != 3) throw DomainError("concat expects [C,H,W] inputs");
        int ctotal = 0;
        for (int x : xs) {
            const Tensor& t = val(x);
            if (t.shape.size() != 3 || t.dim(1) != first.dim(1) || t.dim(2) != first.dim(2))
                throw DomainError("concat inputs must share spatial dimensions");
            ctotal += t.dim(0);
        }
        Tensor out({ctotal, first.dim(1), first.dim(2)});
        std::size_t off = 0;
        bool rg = false;
        for (int x : xs) {
            const Tensor& t = val(x);
            std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
            off += t.size();
            rg = rg || needs(x);
        }
        const int id = emit(std::move(out), rg);
        record(id, [this, xs, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            std::size_t off = 0;
            for (int x : xs) {
                const std::size_t n = val(x).size();
                if (needs(x)) {
                    auto& gx = grad_ref(x);
                    for (std::size_t i = 0; i < n; ++i) gx.v[i] += go.v[off + i];
                }
                off += n;
            }
        });
        return id;
    }

    /// T frames of [C,H,W] -> [C,T,H,W]
    int stack_time(const std::vector<int>& xs) {
        if (xs.empty()) throw DomainError("stack of nothing");
        const Tensor& first = val(xs[0]);
        if (first.shape.size() != 3) throw DomainError("stack expects [C,H,W] inputs");
        for (int x : xs)
            if (!val(x).same_shape(first)) throw DomainError("stacked frames must share shape");
        const int C = first.dim(0), H = first.dim(1), W = first.dim(2);
        const int T = static_cast<int>(xs.size());
        Tensor out({C, T, H, W});
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        bool rg = false;
        for (int ti = 0; ti < T; ++ti) {
            const Tensor& t = val(xs[static_cast<std::size_t>(ti)]);
            for (int c = 0; c < C; ++c)
                std::copy(t.v.begin() + static_cast<std::ptrdiff_t>(c * plane),
                          t.v.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane),
                          out.v.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(c) * T + ti) * plane));
            rg = rg || needs(xs[static_cast<std::size_t>(ti)]);
        }
        const int id = emit(std::move(out), rg);
        record(id, [this, xs, C, T, plane, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (int ti = 0; ti < T; ++ti) {
                const int x = xs[static_cast<std::size_t>(ti)];
                if (!needs(x)) continue;
                auto& gx = grad_ref(x);
                for (int c = 0; c < C; ++c)
                    for (std::size_t p = 0; p < plane; ++p)
                        gx.v[c * plane + p] +=
                            go.v[(static_cast<std::size_t>(c) * T + ti) * plane + p];
            }
        });
        return id;
    }

    // ---- convolution ----

    /// x [Ci,H,W], w [Co,Ci,kh,kw], b [Co]; stride s, symmetric zero pad p.
    int conv2d(int x, int w, int b, int stride, int pad) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (xv.shape.size() != 3 || wv.shape.size() != 4 || bv.shape.size() != 1)
            throw DomainError("conv2d expects x[C,H,W], w[Co,Ci,kh,kw], b[Co]");
        const int Ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
        const int Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        if (wv.dim(1) != Ci || bv.dim(0) != Co) throw DomainError("conv2d channel mismatch");
        if (stride < 1 || pad < 0) throw DomainError("conv2d bad stride/pad");
        if (H + 2 * pad < kh || W + 2 * pad < kw)
            throw DomainError("conv2d kernel larger than the padded input");
        // floor semantics: trailing rows/columns that do not fill a window are
        // simply not visited, matching the usual convolution arithmetic
        const int OH = (H + 2 * pad - kh) / stride + 1;
        const int OW = (W + 2 * pad - kw) / stride + 1;

        Tensor out({Co, OH, OW});
        for (int co = 0; co < Co; ++co)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    double acc = bv.v[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= W) continue;
                                acc += xv.v[idx3(ci, iy, ix, H, W)] *
                                       wv.v[idx4(co, ci, ky, kx, Ci, kh, kw)];
                            }
                        }
                    out.v[idx3(co, oy, ox, OH, OW)] = acc;
                }
        const int id = emit(std::move(out), needs(x) || needs(w) || needs(b));
        record(id, [this, x, w, b, stride, pad, Ci, H, W, Co, kh, kw, OH, OW, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& xv = val(x);
            const Tensor& wv = val(w);
            const bool nx = needs(x), nw = needs(w), nb = needs(b);
            for (int co = 0; co < Co; ++co)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        const double g = go.v[idx3(co, oy, ox, OH, OW)];
                        if (g == 0.0) continue;
                        if (nb) grad_ref(b).v[static_cast<std::size_t>(co)] += g;
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= W) continue;
                                    if (nw)
                                        grad_ref(w).v[idx4(co, ci, ky, kx, Ci, kh, kw)] +=
                                            g * xv.v[idx3(ci, iy, ix, H, W)];
                                    if (nx)
                                        grad_ref(x).v[idx3(ci, iy, ix, H, W)] +=
                                            g * wv.v[idx4(co, ci, ky, kx, Ci, kh, kw)];
                                }
                            }
                    }
        });
        return id;
    }

    /// x [Ci,T,H,W], w [Co,Ci,kt,kh,kw], b [Co]; valid in time, zero pad in
    /// space, stride 1.
    int conv3d(int x, int w, int b, int pad_h, int pad_w) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (xv.shape.size() != 4 || wv.shape.size() != 5 || bv.shape.size() != 1)
            throw DomainError("conv3d expects x[C,T,H,W], w[Co,Ci,kt,kh,kw], b[Co]");
        const int Ci = xv.dim(0), T = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Co = wv.dim(0), kt = wv.dim(2), kh = wv.dim(3), kw = wv.dim(4);
        if (wv.dim(1) != Ci || bv.dim(0) != Co) throw DomainError("conv3d channel mismatch");
        if (kt > T) throw DomainError("temporal kernel longer than the sequence");
        const int OT = T - kt + 1;
        const int OH = H + 2 * pad_h - kh + 1;
        const int OW = W + 2 * pad_w - kw + 1;
        if (OH <= 0 || OW <= 0) throw DomainError("conv3d output collapses");

        Tensor out({Co, OT, OH, OW});
        for (int co = 0; co < Co; ++co)
            for (int ot = 0; ot < OT; ++ot)
                for (int oy = 0; oy < OH; ++oy)
                    for (int ox = 0; ox < OW; ++ox) {
                        double acc = bv.v[static_cast<std::size_t>(co)];
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int tt = 0; tt < kt; ++tt)
                                for (int ky = 0; ky < kh; ++ky) {
                                    const int iy = oy - pad_h + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const int ix = ox - pad_w + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        acc += xv.v[idx4(ci, ot + tt, iy, ix, T, H, W)] *
                                               wv.v[idx5(co, ci, tt, ky, kx, Ci, kt, kh, kw)];
                                    }
                                }
                        out.v[idx4(co, ot, oy, ox, OT, OH, OW)] = acc;
                    }
        const int id = emit(std::move(out), needs(x) || needs(w) || needs(b));
        record(id, [this, x, w, b, pad_h, pad_w, Ci, T, H, W, Co, kt, kh, kw, OT, OH, OW, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& xv = val(x);
            const Tensor& wv = val(w);
            const bool nx = needs(x), nw = needs(w), nb = needs(b);
            for (int co = 0; co < Co; ++co)
                for (int ot = 0; ot < OT; ++ot)
                    for (int oy = 0; oy < OH; ++oy)
                        for (int ox = 0; ox < OW; ++ox) {
                            const double g = go.v[idx4(co, ot, oy, ox, OT, OH, OW)];
                            if (g == 0.0) continue;
                            if (nb) grad_ref(b).v[static_cast<std::size_t>(co)] += g;
                            for (int ci = 0; ci < Ci; ++ci)
                                for (int tt = 0; tt < kt; ++tt)
                                    for (int ky = 0; ky < kh; ++ky) {
                                        const int iy = oy - pad_h + ky;
                                        if (iy < 0 || iy >= H) continue;
                                        for (int kx = 0; kx < kw; ++kx) {
                                            const int ix = ox - pad_w + kx;
                                            if (ix < 0 || ix >= W) continue;
                                            if (nw)
                                                grad_ref(w).v[idx5(co, ci, tt, ky, kx, Ci, kt, kh, kw)] +=
                                                    g * xv.v[idx4(ci, ot + tt, iy, ix, T, H, W)];
                                            if (nx)
                                                grad_ref(x).v[idx4(ci, ot + tt, iy, ix, T, H, W)] +=
                                                    g * wv.v[idx5(co, ci, tt, ky, kx, Ci, kt, kh, kw)];
                                        }
                                    }
                        }
        });
        return id;
    }

    /// Transposed conv (fractionally strided): x [Ci,H,W], w [Ci,Co,kh,kw],
    /// b [Co]; output side (H-1)*stride - 2*pad + kh.
    int conv2d_transpose(int x, int w, int b, int stride, int pad) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (xv.shape.size() != 3 || wv.shape.size() != 4 || bv.shape.size() != 1)
            throw DomainError("deconv expects x[C,H,W], w[Ci,Co,kh,kw], b[Co]");
        const int Ci = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
        const int Co = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
        if (wv.dim(0) != Ci || bv.dim(0) != Co) throw DomainError("deconv channel mismatch");
        if (stride < 1 || pad < 0) throw DomainError("deconv bad stride/pad");
        const int OH = (H - 1) * stride - 2 * pad + kh;
        const int OW = (W - 1) * stride - 2 * pad + kw;
        if (OH <= 0 || OW <= 0) throw DomainError("deconv output collapses");

        Tensor out({Co, OH, OW});
        for (int co = 0; co < Co; ++co)
            for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
                out.v[static_cast<std::size_t>(co) * OH * OW + i] = bv.v[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < Ci; ++ci)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < W; ++ix) {
                    const double xval = xv.v[idx3(ci, iy, ix, H, W)];
                    if (xval == 0.0) continue;
                    for (int co = 0; co < Co; ++co)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = iy * stride - pad + ky;
                            if (oy < 0 || oy >= OH) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ox = ix * stride - pad + kx;
                                if (ox < 0 || ox >= OW) continue;
                                out.v[idx3(co, oy, ox, OH, OW)] +=
                                    xval * wv.v[idx4(ci, co, ky, kx, Co, kh, kw)];
                            }
                        }
                }
        const int id = emit(std::move(out), needs(x) || needs(w) || needs(b));
        record(id, [this, x, w, b, stride, pad, Ci, H, W, Co, kh, kw, OH, OW, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& xv = val(x);
            const Tensor& wv = val(w);
            const bool nx = needs(x), nw = needs(w), nb = needs(b);
            if (nb) {
                auto& gb = grad_ref(b);
                for (int co = 0; co < Co; ++co) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
                        s += go.v[static_cast<std::size_t>(co) * OH * OW + i];
                    gb.v[static_cast<std::size_t>(co)] += s;
                }
            }
            for (int ci = 0; ci < Ci; ++ci)
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < W; ++ix) {
                        const double xval = xv.v[idx3(ci, iy, ix, H, W)];
                        double gx = 0.0;
                        for (int co = 0; co < Co; ++co)
                            for (int ky = 0; ky < kh; ++ky) {
                                const int oy = iy * stride - pad + ky;
                                if (oy < 0 || oy >= OH) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ox = ix * stride - pad + kx;
                                    if (ox < 0 || ox >= OW) continue;
                                    const double g = go.v[idx3(co, oy, ox, OH, OW)];
                                    if (g == 0.0) continue;
                                    if (nw)
                                        grad_ref(w).v[idx4(ci, co, ky, kx, Co, kh, kw)] += g * xval;
                                    if (nx) gx += g * wv.v[idx4(ci, co, ky, kx, Co, kh, kw)];
                                }
                            }
                        if (nx) grad_ref(x).v[idx3(ci, iy, ix, H, W)] += gx;
                    }
        });
        return id;
    }

    // ---- reductions and dense ----

    /// [C,H,W] -> [C]
    int global_avg_pool(int x) {
        const Tensor& xv = val(x);
        if (xv.shape.size() != 3) throw DomainError("pool expects [C,H,W]");
        const int C = xv.dim(0);
        const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
        Tensor out({C});
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += xv.v[c * plane + i];
            out.v[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
        }
        const int id = emit(std::move(out), needs(x));
        record(id, [this, x, C, plane, id] {
            if (!needs(x)) return;
            auto& gx = grad_ref(x);
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (int c = 0; c < C; ++c) {
                const double g = go.v[static_cast<std::size_t>(c)] / static_cast<double>(plane);
                for (std::size_t i = 0; i < plane; ++i) gx.v[c * plane + i] += g;
            }
        });
        return id;
    }

    /// x [I], w [O,I], b [O] -> [O]
    int linear(int x, int w, int b) {
        const Tensor& xv = val(x);
        const Tensor& wv = val(w);
        const Tensor& bv = val(b);
        if (xv.shape.size() != 1 || wv.shape.size() != 2 || bv.shape.size() != 1)
            throw DomainError("linear expects x[I], w[O,I], b[O]");
        const int I = xv.dim(0), O = wv.dim(0);
        if (wv.dim(1) != I || bv.dim(0) != O) throw DomainError("linear shape mismatch");
        Tensor out({O});
        for (int o = 0; o < O; ++o) {
            double acc = bv.v[static_cast<std::size_t>(o)];
            for (int i = 0; i < I; ++i)
                acc += wv.v[static_cast<std::size_t>(o) * I + i] * xv.v[static_cast<std::size_t>(i)];
            out.v[static_cast<std::size_t>(o)] = acc;
        }
        const int id = emit(std::move(out), needs(x) || needs(w) || needs(b));
        record(id, [this, x, w, b, I, O, id] {
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& xv = val(x);
            const Tensor& wv = val(w);
            for (int o = 0; o < O; ++o) {
                const double g = go.v[static_cast<std::size_t>(o)];
                if (g == 0.0) continue;
                if (needs(b)) grad_ref(b).v[static_cast<std::size_t>(o)] += g;
                for (int i = 0; i < I; ++i) {
                    if (needs(w))
                        grad_ref(w).v[static_cast<std::size_t>(o) * I + i] +=
                            g * xv.v[static_cast<std::size_t>(i)];
                    if (needs(x))
                        grad_ref(x).v[static_cast<std::size_t>(i)] +=
                            g * wv.v[static_cast<std::size_t>(o) * I + i];
                }
            }
        });
        return id;
    }

    /// Numerically stable log softmax over a vector.
    int log_softmax(int x) {
        const Tensor& xv = val(x);
        if (xv.shape.size() != 1) throw DomainError("log_softmax expects a vector");
        const int N = xv.dim(0);
        double mx = xv.v[0];
        for (double v : xv.v) mx = std::max(mx, v);
        double lse = 0.0;
        for (double v : xv.v) lse += std::exp(v - mx);
        lse = mx + std::log(lse);
        Tensor out({N});
        for (int i = 0; i < N; ++i) out.v[static_cast<std::size_t>(i)] = xv.v[static_cast<std::size_t>(i)] - lse;
        const int id = emit(std::move(out), needs(x));
        record(id, [this, x, N, id] {
            if (!needs(x)) return;
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const Tensor& yo = nodes_[static_cast<std::size_t>(id)].val;
            auto& gx = grad_ref(x);
            double gsum = 0.0;
            for (int i = 0; i < N; ++i) gsum += go.v[static_cast<std::size_t>(i)];
            for (int i = 0; i < N; ++i)
                gx.v[static_cast<std::size_t>(i)] +=
                    go.v[static_cast<std::size_t>(i)] - std::exp(yo.v[static_cast<std::size_t>(i)]) * gsum;
        });
        return id;
    }

    int pick(int x, int index) {
        const Tensor& xv = val(x);
        if (xv.shape.size() != 1 || index < 0 || index >= xv.dim(0))
            throw DomainError("pick index out of range");
        Tensor out({1});
        out.v[0] = xv.v[static_cast<std::size_t>(index)];
        const int id = emit(std::move(out), needs(x));
        record(id, [this, x, index, id] {
            if (!needs(x)) return;
            grad_ref(x).v[static_cast<std::size_t>(index)] +=
                nodes_[static_cast<std::size_t>(id)].grad.v[0];
        });
        return id;
    }

    /// Weighted mean squared error against a constant target: scalar output.
    /// Weights of zero drop the element and the mean runs over the weight sum.
    int mse_const(int x, Tensor target, Tensor weights) {
        return penalty(x, std::move(target), std::move(weights), /*squared=*/true);
    }

    /// Weighted mean absolute error against a constant target.  The
    /// subgradient at an exact zero residual is taken as zero.
    int mae_const(int x, Tensor target, Tensor weights) {
        return penalty(x, std::move(target), std::move(weights), /*squared=*/false);
    }

    /// c0 + sum_i w_i * x_i over scalar nodes.
    int affine_combine(const std::vector<int>& xs, const std::vector<double>& ws, double c0 = 0.0) {
        if (xs.size() != ws.size() || xs.empty()) throw DomainError("combine arity mismatch");
        double acc = c0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (val(xs[i]).size() != 1) throw DomainError("combine expects scalar nodes");
            acc += ws[i] * val(xs[i]).v[0];
        }
        bool rg = false;
        for (int x : xs) rg = rg || needs(x);
        Tensor out({1});
        out.v[0] = acc;
        const int id = emit(std::move(out), rg);
        record(id, [this, xs, ws, id] {
            const double g = nodes_[static_cast<std::size_t>(id)].grad.v[0];
            for (std::size_t i = 0; i < xs.size(); ++i)
                if (needs(xs[i])) grad_ref(xs[i]).v[0] += ws[i] * g;
        });
        return id;
    }

    /// Runs the reverse sweep from a scalar node.
    void backward(int loss) {
        if (val(loss).size() != 1) throw DomainError("backward needs a scalar loss");
        for (auto& n : nodes_)
            if (n.requires_grad) {
                n.grad = Tensor(n.val.shape);
            } else {
                n.grad = Tensor{};
            }
        auto& ln = nodes_[static_cast<std::size_t>(loss)];
        if (!ln.requires_grad) throw DomainError("loss does not depend on any parameter");
        ln.grad.v[0] = 1.0;
        for (int i = loss; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (n.requires_grad && n.backprop) n.backprop();
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    static std::size_t idx3(int a, int b, int c, int db, int dc) {
        return (static_cast<std::size_t>(a) * db + b) * dc + c;
    }
    static std::size_t idx4(int a, int b, int c, int d, int db, int dc, int dd) {
        return ((static_cast<std::size_t>(a) * db + b) * dc + c) * dd + d;
    }
    static std::size_t idx5(int a, int b, int c, int d, int e, int db, int dc, int dd, int de) {
        return (((static_cast<std::size_t>(a) * db + b) * dc + c) * dd + d) * de + e;
    }

    const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    Tensor& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    int emit(Tensor out, bool requires_grad) {
        nodes_.push_back(Node{std::move(out), Tensor{}, requires_grad, nullptr});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void record(int id, std::function<void()> fn) {
        nodes_[static_cast<std::size_t>(id)].backprop = std::move(fn);
    }

    template <typename F, typename B>
    int unary(int a, F fwd, B bwd) {
        Tensor out = val(a);
        for (double& x : out.v) x = fwd(x);
        const int id = emit(std::move(out), needs(a));
        record(id, [this, a, bwd, id] {
            if (!needs(a)) return;
            auto& ga = grad_ref(a);
            const Tensor& xv = val(a);
            const Tensor& yv = nodes_[static_cast<std::size_t>(id)].val;
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            for (std::size_t i = 0; i < go.size(); ++i)
                ga.v[i] += bwd(xv.v[i], yv.v[i], go.v[i]);
        });
        return id;
    }

    template <typename F, typename B>
    int binary(int a, int b, F fwd, B bwd) {
        const Tensor& av = val(a);
        const Tensor& bv = val(b);
        if (!av.same_shape(bv))
            throw DomainError("elementwise shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
        Tensor out(av.shape);
        for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = fwd(av.v[i], bv.v[i]);
        const int id = emit(std::move(out), needs(a) || needs(b));
        record(id, [this, a, b, bwd, id] {
            const Tensor& av = val(a);
            const Tensor& bv = val(b);
            const Tensor& go = nodes_[static_cast<std::size_t>(id)].grad;
            const bool na = needs(a), nb = needs(b);
            for (std::size_t i = 0; i < go.size(); ++i) {
                const auto [ga, gb] = bwd(av.v[i], bv.v[i], go.v[i]);
                if (na) grad_ref(a).v[i] += ga;
                if (nb) grad_ref(b).v[i] += gb;
            }
        });
        return id;
    }

    int penalty(int x, Tensor target, Tensor weights, bool squared) {
        const Tensor& xv = val(x);
        if (!xv.same_shape(target)) throw DomainError("penalty target shape mismatch");
        if (weights.size() != xv.size() && weights.size() != 0)
            throw DomainError("penalty weight shape mismatch");
        double wsum = 0.0, acc = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double wgt = weights.size() ? weights.v[i] : 1.0;
            if (wgt <= 0.0) continue;
            const double d = xv.v[i] - target.v[i];
            acc += wgt * (squared ? d * d : std::abs(d));
            wsum += wgt;
        }
        if (wsum <= 0.0) throw DomainError("penalty has no active elements");
        Tensor out({1});
        out.v[0] = acc / wsum;
        const int id = emit(std::move(out), needs(x));
        record(id, [this, x, target = std::move(target), weights = std::move(weights), squared,
                    wsum, id] {
            if (!needs(x)) return;
            auto& gx = grad_ref(x);
            const Tensor& xv = val(x);
            const double g = nodes_[static_cast<std::size_t>(id)].grad.v[0] / wsum;
            for (std::size_t i = 0; i < xv.size(); ++i) {
                const double wgt = weights.size() ? weights.v[i] : 1.0;
                if (wgt <= 0.0) continue;
                const double d = xv.v[i] - target.v[i];
                if (squared)
                    gx.v[i] += g * wgt * 2.0 * d;
                else
                    gx.v[i] += g * wgt * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
            }
        });
        return id;
    }

    std::vector<Node> nodes_;
};

} // namespace heliocast::nn
