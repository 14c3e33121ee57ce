#pragma once

// Seeded, counter-addressable PRNG used everywhere randomness appears.
//
// One algorithm repo-wide: xoshiro256** for the stream, splitmix64 for
// seeding and for deriving substream keys from (seed, coordinates).
// Same (seed, coordinates) always yields the same stream, on every
// platform, so bootstrap replicates and benchmark draws can run in any
// order (or in parallel) without changing results.

#include <array>
#include <cmath>
#include <cstdint>

namespace disagg {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

// Derives a substream key; chain calls to address nested coordinates,
// e.g. mix_seed(mix_seed(master, group), replicate).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t coordinate) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (coordinate + 1));
    return detail::splitmix64(s);
}

class Rng {
public:
    static Rng from_seed(std::uint64_t seed) {
        Rng r;
        std::uint64_t s = seed;
        for (auto& word : r.state_) word = detail::splitmix64(s);
        return r;
    }

    // Substream addressed by up to three coordinates (counter scheme).
    static Rng stream(std::uint64_t seed, std::uint64_t a,
                      std::uint64_t b = 0, std::uint64_t c = 0) {
        return from_seed(mix_seed(mix_seed(mix_seed(seed, a), b), c));
    }

    std::uint64_t next_u64() {
        auto& s = state_;
        const std::uint64_t result = detail::rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl(s[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform index in [0, n); n must be > 0.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; consumes exactly two words.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool next_bernoulli(double p) { return next_double() < p; }

private:
    std::array<std::uint64_t, 4> state_{};
};

} // namespace disagg
