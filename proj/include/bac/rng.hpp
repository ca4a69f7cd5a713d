// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bac {

// SplitMix64. Every random quantity in the library (weights, noise,
// observations, test fixtures) is drawn from this stream so that any
// implementation following the same recipe reproduces identical bits.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [-a, a).
    double symmetric(double a) { return (2.0 * uniform01() - 1.0) * a; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; one draw per call (the sine branch is discarded).
    double normal() {
        double u1 = uniform01();
        const double u2 = uniform01();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

// Derives an independent sub-seed, e.g. one per episode.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 rng(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
    return rng.next();
}

} // namespace bac
