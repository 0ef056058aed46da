#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/geometry.hpp"

namespace heliocast {

/// Uniform in [0, 1) built directly from the top 53 bits of the engine so the
/// stream does not depend on the standard library's distribution internals.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller on the portable uniform above.
inline double gaussian01(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

/// Stationary Gaussian random field evaluated as a finite sum of cosine
/// modes with isotropically drawn wavevectors:
///   f(p) = sum_m a_m * cos(k_m . p + phi_m).
/// Band-limited and smooth, it can be evaluated at any continuous point, so
/// advection by a velocity field is exact rather than grid-resampled.
class ModeSumField {
public:
    ModeSumField() = default;

    /// `correlation_m` sets the dominant wavelength scale and `sigma` the
    /// pointwise standard deviation.
    ModeSumField(std::uint64_t seed, double correlation_m, double sigma, int n_modes = 48) {
        if (!(correlation_m > 0.0)) throw DomainError("correlation length must be positive");
        if (!(sigma > 0.0)) throw DomainError("field sigma must be positive");
        if (n_modes < 8) throw DomainError("mode-sum field needs at least 8 modes");
        std::mt19937_64 rng(seed);
        modes_.reserve(static_cast<std::size_t>(n_modes));
        const double amp = sigma * std::sqrt(2.0 / n_modes);
        const double k0 = 2.0 * kPi / correlation_m;
        for (int m = 0; m < n_modes; ++m) {
            // Wavenumbers drawn uniformly in a band around k0, directions
            // isotropic.
            const double mag = k0 * (0.3 + 1.4 * uniform01(rng));
            const double dir = uniform_in(rng, 0.0, 2.0 * kPi);
            Mode mode;
            mode.kx = mag * std::cos(dir);
            mode.ky = mag * std::sin(dir);
            mode.phase = uniform_in(rng, 0.0, 2.0 * kPi);
            mode.amp = amp;
            modes_.push_back(mode);
        }
    }

    double operator()(double x, double y) const {
        double f = 0.0;
        for (const auto& m : modes_) f += m.amp * std::cos(m.kx * x + m.ky * y + m.phase);
        return f;
    }

    bool empty() const { return modes_.empty(); }

private:
    struct Mode {
        double kx = 0.0, ky = 0.0, amp = 0.0, phase = 0.0;
    };
    std::vector<Mode> modes_;
};

} // namespace heliocast
