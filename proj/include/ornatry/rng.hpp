// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ornatry {

// Deterministic RNG with portable distributions. std::*_distribution output is
// implementation-defined, so uniform/normal draws are derived from the raw
// mt19937_64 stream directly; results are identical on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_base_(seed) {}

    uint64_t raw() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return (eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        // rejection sampling to avoid modulo bias
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller (one value per call, cached pair).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Independent child stream; (seed, tag) -> stream is stable.
    Rng fork(uint64_t tag) const {
        return Rng(mix(seed_base_, tag));
    }

    static uint64_t mix(uint64_t a, uint64_t b) {
        // splitmix64 finalizer over the combined words
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_base_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable per-sample stream for (master seed, sample index).
inline Rng sample_rng(uint64_t master_seed, uint64_t index) {
    return Rng(Rng::mix(master_seed, index));
}

}  // namespace ornatry
