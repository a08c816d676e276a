#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "e1/core/real_array.hpp"

namespace e1 {

// Counter-based generator: output i of stream `key` is mix(key, i). Splitting
// derives a child key, so parallel consumers get streams that do not depend on
// scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : m_key(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    /// Independent child stream identified by `stream_id`. Does not advance this stream.
    Rng split(std::uint64_t stream_id) const {
        Rng child;
        child.m_key = mix(m_key ^ mix(stream_id + 0x9e3779b97f4a7c15ULL));
        return child;
    }

    std::uint64_t next_u64() { return mix(m_key + 0x9e3779b97f4a7c15ULL * ++m_counter); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform integer on [lo, hi] inclusive.
    long long between(long long lo, long long hi) {
        return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        m_spare = r * std::sin(theta);
        m_has_spare = true;
        return r * std::cos(theta);
    }

    RealArray normal_array(Shape shape) {
        RealArray out(std::move(shape));
        for (double& v : out.values()) v = normal();
        return out;
    }

    std::uint64_t counter() const noexcept { return m_counter; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t m_key = 0;
    std::uint64_t m_counter = 0;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

} // namespace e1
