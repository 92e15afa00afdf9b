#ifndef SPQKD_RNG_HPP
#define SPQKD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace spqkd {

// SplitMix64 output function; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed for pulse block `block_index` of a run seeded with `master_seed`.
// For a fixed master seed the map is injective: the additive step is a
// bijection mod 2^64 and so is the mixer.
constexpr std::uint64_t derive_substream_seed(std::uint64_t master_seed,
                                              std::uint64_t block_index) noexcept {
    constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(master_seed + (block_index + 1) * golden_gamma);
}

// Explicit generator state. All variate transforms are written out here so
// that streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Exponential with the given mean, by inverse CDF.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    // Standard normal via Box-Muller (one variate per call, no caching).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace spqkd

#endif
