#pragma once

#include <cmath>
#include <cstdint>

namespace jbsde {

// Counter-free splittable RNG. Every path gets its own xoshiro256++ stream
// derived from (master seed, purpose salt, path index) through splitmix64, so
// ensembles are bit-identical however the path loop is ordered or parallelized,
// and prefixes of an ensemble coincide with smaller ensembles at the same seed.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Xoshiro256pp {
public:
    Xoshiro256pp(std::uint64_t seed, std::uint64_t salt, std::uint64_t stream) {
        std::uint64_t sm = seed ^ (salt * 0x9e3779b97f4a7c15ull) ^ (stream + 1) * 0xda942042e4dd58b5ull;
        for (auto& word : s_) word = splitmix64(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on (0,1]; never 0 so logs are safe.
    double uniform_pos() { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }

    // Uniform on [0,1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Box-Muller with spare caching. Hand-rolled so streams are reproducible across
// standard library implementations (std::normal_distribution is not pinned).
class GaussianSampler {
public:
    explicit GaussianSampler(Xoshiro256pp& rng) : rng_(rng) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = rng_.uniform_pos();
        const double u2 = rng_.uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    Xoshiro256pp& rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Exact Poisson count by summing unit exponentials until the mean is exceeded.
// O(mean) work; step compensator masses at desk scale are small.
inline std::uint32_t poisson_draw(Xoshiro256pp& rng, double mean) {
    if (mean <= 0.0) return 0;
    std::uint32_t k = 0;
    double acc = -std::log(rng.uniform_pos());
    while (acc < mean) {
        ++k;
        acc += -std::log(rng.uniform_pos());
    }
    return k;
}

// Purpose salts keep the Brownian and jump streams of one path independent.
inline constexpr std::uint64_t kSaltBrownian = 0x42524f574e49414eull;
inline constexpr std::uint64_t kSaltJumps = 0x4a554d50535f5f5full;
inline constexpr std::uint64_t kSaltProbe = 0x50524f42455f5f5full;

}  // namespace jbsde
