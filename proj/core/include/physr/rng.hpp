#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace physr {

// Portable random source. std::uniform_real_distribution and
// std::normal_distribution are implementation-defined, so the transforms
// from raw 64-bit draws are done here to keep seeded runs bit-identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n).
    std::size_t index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(engine_() % n); }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Derive an independent stream, e.g. one per island or restart.
    Rng split(std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(next()), static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)};
        std::mt19937_64 fresh(seq);
        return Rng(fresh());
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace physr
