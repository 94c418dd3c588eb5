// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

namespace styleswap {

/// SplitMix64 (Steele, Lea, Flood 2014). Every random quantity in the engine,
/// model weights and sampling noise alike, is drawn from this generator so
/// that independent implementations can reproduce runs bit for bit.
///
///   state += 0x9E3779B97F4A7C15
///   z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
///
/// uniform(): top 53 bits scaled by 2^-53, in [0, 1).
/// gaussian(): Box-Muller on (u1 = 1 - uniform(), u2 = uniform()), emitting
/// r*cos(2*pi*u2) first and caching r*sin(2*pi*u2) for the next call.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double gaussian() noexcept;

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Deterministic seed derivation: folds each tag into the base through one
/// SplitMix64 round so that (seed, t) and (seed, t') give unrelated streams.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept;

}  // namespace styleswap
