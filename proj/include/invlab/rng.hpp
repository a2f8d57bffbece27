// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "invlab/grid.hpp"

namespace invlab {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer (Vigna's mix constants).
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

}  // namespace detail

/// Counter-based SplitMix64 stream: output i is mix64(key + (i+1)*golden).
/// The same (key, counter) pair yields the same value on every platform,
/// which is what makes recorded schedules replayable bit-exactly.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

    /// Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1); safe as a log() argument.
    double next_open_unit() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Plain modulo: the bias is ~n/2^64, far below
    /// anything the frequency checks here can resolve, and the draw stays
    /// a fixed one-word consumption, which keeps streams aligned.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via the trig form of Box-Muller. Consumes exactly two
    /// words per draw; the sine partner is discarded so no state is carried.
    double next_gaussian() {
        const double u1 = next_open_unit();
        const double u2 = next_unit();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Child-stream key derivation. Distinct paths from the same root give
/// decorrelated streams; the derivation is pure integer mixing.
inline std::uint64_t substream(std::uint64_t key, std::uint64_t element) {
    return detail::mix64(key ^ detail::mix64(element + detail::kGolden));
}

inline std::uint64_t substream(std::uint64_t key, std::initializer_list<std::uint64_t> path) {
    for (std::uint64_t e : path) key = substream(key, e);
    return key;
}

/// FNV-1a over the tag text, so stream roles can be named at call sites.
inline constexpr std::uint64_t stream_tag(const char* name) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char* p = name; *p; ++p) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(*p));
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline void fill_gaussian(Latent& x, CounterRng& rng) {
    for (double& v : x.data) v = rng.next_gaussian();
}

}  // namespace invlab
