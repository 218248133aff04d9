#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace ape {

/// Seedable generator with output that is identical on every platform.
///
/// The bit source is std::mt19937_64, whose sequence is fixed by the C++
/// standard. The distributions are written out here rather than taken from
/// <random>, whose algorithms are implementation-defined:
///   uniform01   top 53 bits scaled by 2^-53, in [0, 1)
///   uniform_int rejection sampling on the raw 64-bit output
///   normal      Box-Muller, one variate per pair of uniforms
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Derives an independent stream for item `index` of a seeded collection.
    static Rng for_stream(std::uint64_t seed, std::uint64_t index);

    std::uint64_t next_u64() { return engine_(); }
    double uniform01();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    double normal(double mean = 0.0, double stddev = 1.0);

    /// Fisher-Yates shuffle driven by uniform_int.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i - 1)));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

} // namespace ape
