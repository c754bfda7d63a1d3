#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace lsps {

inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// FNV-1a over the bytes of a string; used to fold stream tags into seeds.
inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= (uint64_t)c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    // One splitmix round over the xor keeps derived streams decorrelated.
    uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    return splitmix64_next(s);
}

// Counter-free stateful generator over splitmix64. Deterministic for a given
// seed; cheap to construct, so call sites derive fresh ones per (tag, indices)
// instead of threading generator state through the program.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // Warm up so that low-entropy seeds (0, 1, ...) diverge immediately.
        splitmix64_next(state_);
    }

    uint64_t next_u64() { return splitmix64_next(state_); }

    // Uniform in [0, 1). 53-bit mantissa path.
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        uint64_t x = next_u64();
        __uint128_t m = (__uint128_t)x * n;
        uint64_t l = (uint64_t)m;
        if (l < n) {
            uint64_t t = (0 - n) % n;
            while (l < t) {
                x = next_u64();
                m = (__uint128_t)x * n;
                l = (uint64_t)m;
            }
        }
        return (uint64_t)(m >> 64);
    }

    // Standard normal via Box-Muller. Uses both outputs.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Keep u1 away from 0 so log() stays finite.
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Named substream derivation. Every stochastic site in the codebase derives
// its generator as stream(seed, "tag", i, j) so runs replay bit-exactly
// regardless of evaluation order elsewhere.
inline uint64_t subseed(uint64_t seed, const std::string& tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = hash_combine(seed, hash_str(tag));
    h = hash_combine(h, 0x9E3779B97F4A7C15ull ^ a);
    return hash_combine(h, 0xC2B2AE3D27D4EB4Full ^ b);
}

inline Rng stream(uint64_t seed, const std::string& tag, uint64_t a = 0, uint64_t b = 0) {
    return Rng(subseed(seed, tag, a, b));
}

}  // namespace lsps
