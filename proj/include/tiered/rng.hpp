#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace tiered {

// splitmix64 finalizer. Also the hash behind the Random page mapping, so its
// output must never change.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent sub-stream seed for component `stream` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(seed ^ mix64(stream + 0x51ed2701ULL));
}

/// Portable random source. std::mt19937_64 output is fixed by the standard;
/// the std distributions are not, so every variate is derived here from raw
/// 64-bit draws and sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Exponential variate with the given rate (mean 1/rate).
    double exponential(double rate);

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Index i drawn with probability weights[i] / total.
    std::size_t pick_weighted(std::span<const double> weights, double total);

private:
    std::mt19937_64 engine_;
};

}  // namespace tiered
