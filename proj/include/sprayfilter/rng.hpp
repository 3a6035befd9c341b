#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sprayfilter/types.hpp"

namespace sprayfilter {

// Seeded random source with fixed output transforms. std::mt19937_64 has a
// standard-mandated bit stream, and the mappings below avoid library
// distribution objects, so a given seed produces the same values on every
// platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

    // Standard normal via Box-Muller; u1 is shifted into (0, 1] so the log
    // argument never hits zero.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sprayfilter
