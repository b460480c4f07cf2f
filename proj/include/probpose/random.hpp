#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace probpose {

/// Seeded generator with distributions written out explicitly, so a given seed
/// produces the same stream with every standard library (the std::
/// distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : m_engine(seed)
    {
    }

    /// Independent stream for a (seed, key) pair, e.g. one per image id.
    static Rng derived(std::uint64_t seed, std::uint64_t key) { return Rng(mix(seed ^ mix(key + 0x9e3779b97f4a7c15ULL))); }

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection sampled. n must be positive.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do {
            r = m_engine();
        } while (r >= limit);
        return r % n;
    }

    /// Standard normal via Box-Muller.
    double normal()
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    static std::uint64_t mix(std::uint64_t z)
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 m_engine;
};

} // namespace probpose
