#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "heliocast/error.hpp"

namespace heliocast {

/// Dense row-major raster with planar channel layout ([c][y][x]), an optional
/// per-pixel validity mask (1 = valid) shared by all channels, and the
/// physical range of the stored quantity.
struct Grid2D {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> values;       // size width*height*channels
    std::array<float, 2> value_range{0.0f, 1.0f};
    std::vector<std::uint8_t> mask;  // empty => all pixels valid; else size width*height

    Grid2D() = default;
    Grid2D(int w, int h, int c = 1, float fill = 0.0f)
        : width(w), height(h), channels(c), values(checked_size(w, h, c), fill) {}

    static std::size_t checked_size(int w, int h, int c) {
        if (w <= 0 || h <= 0 || c <= 0) throw DomainError("Grid2D dimensions must be positive");
        return static_cast<std::size_t>(w) * h * c;
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    float at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool valid(int y, int x) const {
        return mask.empty() || mask[static_cast<std::size_t>(y) * width + x] != 0;
    }
    void set_valid(int y, int x, bool v) {
        if (mask.empty()) mask.assign(pixel_count(), 1);
        mask[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
    }

    bool any_masked() const {
        if (mask.empty()) return false;
        return std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m == 0; });
    }

    void ensure_mask() {
        if (mask.empty()) mask.assign(pixel_count(), 1);
    }

    /// Min/max over valid pixels of all channels; nullopt if everything is masked.
    std::optional<std::array<float, 2>> valid_extent() const {
        float lo = std::numeric_limits<float>::infinity();
        float hi = -std::numeric_limits<float>::infinity();
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    if (valid(y, x)) {
                        const float v = at(c, y, x);
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
        if (lo > hi) return std::nullopt;
        return std::array<float, 2>{lo, hi};
    }
};

/// Bilinear sample of one channel at fractional pixel coordinates (x, y),
/// where integer coordinates land on pixel centers.  Out-of-bounds or masked
/// taps get zero weight and the remaining weights are renormalized; if every
/// tap is unusable the result is nullopt (caller should mask the output).
/// The result is a convex combination of valid neighbors, so it never leaves
/// their value range.
inline std::optional<double> bilinear_sample(const Grid2D& g, int c, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    double acc = 0.0, wsum = 0.0;
    for (int i = 0; i < 4; ++i) {
        if (w[i] <= 0.0) continue;
        if (xs[i] < 0 || xs[i] >= g.width || ys[i] < 0 || ys[i] >= g.height) continue;
        if (!g.valid(ys[i], xs[i])) continue;
        acc += w[i] * g.at(c, ys[i], xs[i]);
        wsum += w[i];
    }
    if (wsum <= 0.0) return std::nullopt;
    return acc / wsum;
}

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_i64(std::ostream& os, std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    write_u32(os, static_cast<std::uint32_t>(u & 0xffffffffu));
    write_u32(os, static_cast<std::uint32_t>(u >> 32));
}

inline std::int64_t read_i64(std::istream& is) {
    const std::uint64_t lo = read_u32(is);
    const std::uint64_t hi = read_u32(is);
    return static_cast<std::int64_t>(lo | (hi << 32));
}

inline void write_f32_block(std::ostream& os, const float* data, std::size_t n) {
    static_assert(std::endian::native == std::endian::little,
                  "raster io assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

inline void read_f32_block(std::istream& is, float* data, std::size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
}

} // namespace detail

/// FGRID binary raster: "FGRD" magic, u32 version(=1), u32 width, u32 height,
/// u32 channels, u8 mask flag, then width*height*channels float32 samples in
/// row-major planar order, then width*height mask bytes when the flag is set.
/// All integers and floats are little-endian.
inline void write_fgrid(std::ostream& os, const Grid2D& g) {
    if (g.values.size() != g.pixel_count() * static_cast<std::size_t>(g.channels))
        throw DomainError("grid value buffer size does not match dimensions");
    if (!g.mask.empty() && g.mask.size() != g.pixel_count())
        throw DomainError("grid mask size does not match dimensions");
    os.write("FGRD", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, static_cast<std::uint32_t>(g.width));
    detail::write_u32(os, static_cast<std::uint32_t>(g.height));
    detail::write_u32(os, static_cast<std::uint32_t>(g.channels));
    const std::uint8_t flag = g.mask.empty() ? 0 : 1;
    os.write(reinterpret_cast<const char*>(&flag), 1);
    detail::write_f32_block(os, g.values.data(), g.values.size());
    if (flag) os.write(reinterpret_cast<const char*>(g.mask.data()), static_cast<std::streamsize>(g.mask.size()));
    if (!os) throw DataError("short write while serializing raster");
}

inline Grid2D read_fgrid(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGRD", 4) != 0) throw DataError("bad raster magic");
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1u) throw DataError("unsupported raster version " + std::to_string(version));
    const std::uint32_t w = detail::read_u32(is);
    const std::uint32_t h = detail::read_u32(is);
    const std::uint32_t c = detail::read_u32(is);
    if (w == 0 || h == 0 || c == 0 || w > (1u << 20) || h > (1u << 20) || c > 4096u)
        throw DataError("implausible raster dimensions");
    std::uint8_t flag = 0;
    is.read(reinterpret_cast<char*>(&flag), 1);
    if (flag > 1) throw DataError("bad raster mask flag");
    Grid2D g(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    detail::read_f32_block(is, g.values.data(), g.values.size());
    if (flag) {
        g.mask.resize(g.pixel_count());
        is.read(reinterpret_cast<char*>(g.mask.data()), static_cast<std::streamsize>(g.mask.size()));
    }
    if (!is) throw DataError("truncated raster stream");
    if (const auto ext = g.valid_extent()) g.value_range = *ext;
    return g;
}

inline void save_fgrid(const std::string& path, const Grid2D& g) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    write_fgrid(os, g);
}

inline Grid2D load_fgrid(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open raster: " + path);
    return read_fgrid(is);
}

} // namespace heliocast
