#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace oqft {

/// Counter-based generator: every output is a pure function of
/// (seed, stream, domain, counter), so trajectories can be generated in any
/// order or in parallel with identical results.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t domain = 0)
        : key_(mix(mix(seed ^ 0x243f6a8885a308d3ULL) ^ mix(stream + 0x13198a2e03707344ULL) ^ mix(domain * 0xa4093822299f31d0ULL + 1))) {}

    std::uint64_t bits(std::uint64_t counter) const { return mix(key_ + counter * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normals 2m and 2m+1: one Box-Muller pair on counters 2m, 2m+1.
    void normal_pair(std::uint64_t m, double& z0, double& z1) const {
        const double r = std::sqrt(-2.0 * std::log(uniform(2 * m)));
        const double phase = 2.0 * std::numbers::pi * uniform(2 * m + 1);
        z0 = r * std::cos(phase);
        z1 = r * std::sin(phase);
    }

    /// Standard normal number k.
    double normal(std::uint64_t k) const {
        double z0, z1;
        normal_pair(k / 2, z0, z1);
        return k % 2 ? z1 : z0;
    }

    /// Standard normals k0, k0+1, ... written to out[0..count).
    void fill_normal(std::uint64_t k0, std::size_t count, double* out) const {
        std::size_t i = 0;
        if (k0 % 2 && count) out[i++] = normal(k0);
        for (; i + 1 < count; i += 2) normal_pair((k0 + i) / 2, out[i], out[i + 1]);
        if (i < count) out[i] = normal(k0 + i);
    }

    /// Sequential draws on top of the counter interface.
    class Stream;

private:
    // SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
};

class CounterRng::Stream {
public:
    explicit Stream(const CounterRng& rng) : rng_(rng) {}
    double uniform() { return rng_.uniform(next_++); }
    double normal() {
        const double u1 = rng_.uniform(next_++);
        const double u2 = rng_.uniform(next_++);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    CounterRng rng_;
    std::uint64_t next_ = 0;
};

}  // namespace oqft
