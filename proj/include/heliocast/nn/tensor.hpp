#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/grid.hpp"

namespace heliocast::nn {

/// Dense double-precision tensor.  Double is used internally (disk formats
/// stay float32) so finite-difference gradient checks have the headroom they
/// need.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        v.assign(count(shape), fill);
    }

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DomainError("tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

/// Copies a single-channel grid into a [1,H,W] tensor (or [C,H,W] for
/// multi-channel grids).  Masked pixels carry their stored value; validity is
/// handled by loss weighting, not by the tensor itself.
inline Tensor tensor_from_grid(const Grid2D& g) {
    Tensor t({g.channels, g.height, g.width});
    for (std::size_t i = 0; i < t.size(); ++i) t.v[i] = static_cast<double>(g.values[i]);
    return t;
}

/// Per-pixel weights from a grid mask: 1 for valid pixels, 0 for masked.
inline Tensor weights_from_mask(const Grid2D& g) {
    Tensor t({1, g.height, g.width}, 1.0);
    if (!g.mask.empty())
        for (std::size_t i = 0; i < g.mask.size(); ++i) t.v[i] = g.mask[i] ? 1.0 : 0.0;
    return t;
}

inline Grid2D grid_from_tensor(const Tensor& t) {
    if (t.shape.size() != 3) throw DomainError("expected a [C,H,W] tensor");
    Grid2D g(t.dim(2), t.dim(1), t.dim(0));
    for (std::size_t i = 0; i < t.size(); ++i) g.values[i] = static_cast<float>(t.v[i]);
    return g;
}

} // namespace heliocast::nn
