#pragma once

// Portable RNG helpers. std::mt19937_64's output sequence is fixed by the
// standard, the distributions are not, so anything that must reproduce across
// standard libraries goes through the helpers here.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "core.hpp"

namespace pragcheck {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream) { return Rng(derive_seed(master, stream)); }

/// Uniform integer in [0, n) by rejection sampling.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: empty range");
    const std::uint64_t limit = Rng::max() - (Rng::max() % n);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle(std::span<T> xs, Rng& rng) {
    for (std::size_t i = xs.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(xs[i - 1], xs[j]);
    }
}

/// Standard normal via Box-Muller.
inline double standard_normal(Rng& rng) {
    double u1;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Gamma(shape, 1) by Marsaglia-Tsang.
inline double gamma_variate(Rng& rng, double shape) {
    if (shape < 1.0) {
        const double u = uniform01(rng);
        return gamma_variate(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = standard_normal(rng);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01(rng);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

inline double beta_variate(Rng& rng, double a, double b) {
    const double x = gamma_variate(rng, a);
    const double y = gamma_variate(rng, b);
    return x / (x + y);
}

/// Multinomial draw by sequential categorical sampling (n is small in practice).
inline CategoryCounts sample_multinomial(Rng& rng, std::int64_t n, const std::array<double, 3>& p) {
    CategoryCounts out{0, 0, 0};
    const double c0 = p[0];
    const double c1 = p[0] + p[1];
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = uniform01(rng) * (p[0] + p[1] + p[2]);
        if (u < c0 && p[0] > 0.0)
            ++out[0];
        else if (u < c1 && p[1] > 0.0)
            ++out[1];
        else if (p[2] > 0.0)
            ++out[2];
        else if (p[1] > 0.0)
            ++out[1];
        else
            ++out[0];
    }
    return out;
}

} // namespace pragcheck
