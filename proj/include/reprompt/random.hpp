#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace reprompt {

/// SplitMix64 finalizer. Used as the seed-splitting hash everywhere so that
/// derived seeds do not depend on the standard library implementation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// seed_i = hash(master, i): chained SplitMix64 over every component.
template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t master, Rest... rest) noexcept
{
    std::uint64_t h = splitmix64(master);
    ((h = splitmix64(h ^ static_cast<std::uint64_t>(rest))), ...);
    return h;
}

/// Thin wrapper over mt19937_64. The distributions are written out by hand:
/// std::uniform_real_distribution and friends are implementation-defined,
/// and every artifact here has to be byte-reproducible.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return x % n;
    }

    /// Standard normal via Box-Muller (no cached second draw).
    double normal()
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace reprompt
