#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace rppg {

// splitmix64 step, used for seed derivation and stream splitting.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives a child seed from a master seed and a salt string. Deterministic
// across platforms, avoids correlated streams when salts differ.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view salt) {
    std::uint64_t h = master ^ 0x51ed270b4d2f6c9dull;
    for (unsigned char c : salt) {
        h ^= c;
        (void)splitmix64(h);
        h = splitmix64(h);
    }
    std::uint64_t s = h;
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view salt,
                                 std::uint64_t index) {
    std::uint64_t h = derive_seed(master, salt);
    h ^= 0x6a09e667f3bcc909ull + index * 0x9e3779b97f4a7c15ull;
    std::uint64_t s = h;
    return splitmix64(s);
}

// Deterministic RNG. mt19937_64 is pinned by the standard; the distribution
// transforms are written out here because std::*_distribution is
// implementation defined and would break bit reproducibility across
// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform in [0, 1). 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) {
        return mean + stddev * gaussian();
    }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t integer(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace rppg
