#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace latsim {

/// Seeded generator with hand-rolled distributions so that draws are
/// reproducible across standard-library implementations (std's
/// uniform_real_distribution is not pinned by the standard).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1), 53-bit resolution.
    double canonical() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

    /// Box-Muller (cosine branch only).
    double gaussian(double mean, double sigma) {
        double u1 = canonical();
        while (u1 <= 0.0) u1 = canonical();
        double u2 = canonical();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(6.28318530717958647692 * u2);
    }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

} // namespace latsim
