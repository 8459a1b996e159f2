#pragma once

#include <cstdint>
#include <cmath>

#include "bevadapt/common.hpp"

namespace bevadapt {

// SplitMix64 sequential generator. Used everywhere instead of <random> so
// that streams are identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // standard normal via Box-Muller (one value per call, no cache)
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::uint64_t state_;
};

// Stateless per-element randomness for use inside parallel loops: the value
// depends only on (stream, index), never on evaluation order or thread count.
inline double hash_uniform(std::uint64_t stream, std::uint64_t index) {
    std::uint64_t z = hash_combine(stream, index);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
}

inline double hash_normal(std::uint64_t stream, std::uint64_t index) {
    double u1 = hash_uniform(stream, 2 * index);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = hash_uniform(stream, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

} // namespace bevadapt
