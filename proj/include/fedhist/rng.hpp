#pragma once

// Seeded random streams built on mt19937_64 raw output. All draw functions
// (uniform, normal, gamma, dirichlet, shuffling) are implemented here instead
// of using <random> distributions, whose output is implementation-defined;
// this keeps experiment runs reproducible across standard libraries.

#include <cstdint>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace fedhist {

// SplitMix64 finalizer.
inline std::uint64_t hash_mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed plus up to three
// stream coordinates (tag, client id, job index, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t x = hash_mix(base ^ 0x6a09e667f3bcc909ull);
    x = hash_mix(x ^ hash_mix(a));
    x = hash_mix(x ^ hash_mix(b));
    x = hash_mix(x ^ hash_mix(c));
    return x;
}

// Stream tags used to split one experiment seed into independent substreams.
enum class StreamTag : std::uint64_t {
    data = 1,
    partition = 2,
    init = 3,
    speed = 4,
    local_job = 5,
};

inline std::uint64_t derive_seed(std::uint64_t base, StreamTag tag,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    return derive_seed(base, static_cast<std::uint64_t>(tag), b, c);
}

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_raw() { return engine_(); }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1); never returns an exact endpoint.
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        constexpr std::uint64_t max64 = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t rem = (max64 % n + 1) % n;  // 2^64 mod n
        std::uint64_t x = engine_();
        if (rem != 0) {
            const std::uint64_t cutoff = max64 - rem + 1;  // multiple of n
            while (x >= cutoff) x = engine_();
        }
        return x % n;
    }

    // Standard normal via Box-Muller; consumes exactly two engine draws.
    double normal() {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;          // [0, 1)
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform_open();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    // Symmetric Dirichlet over n coordinates.
    std::vector<double> dirichlet(double alpha, std::size_t n) {
        std::vector<double> out(n);
        double sum = 0.0;
        for (auto& v : out) {
            v = gamma(alpha);
            sum += v;
        }
        if (!(sum > 0.0)) {
            // All draws underflowed to zero: put the whole mass on one coordinate.
            std::fill(out.begin(), out.end(), 0.0);
            out[uniform_int(n)] = 1.0;
            return out;
        }
        for (auto& v : out) v /= sum;
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = uniform_int(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    // Ordered sample of k distinct indices from [0, n): k-prefix Fisher-Yates.
    std::vector<int> sample_indices(int n, int k) {
        if (k > n || k < 0) throw std::invalid_argument("sample_indices: need 0 <= k <= n");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            const std::size_t j = static_cast<std::size_t>(i) +
                                  uniform_int(static_cast<std::uint64_t>(n - i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(k));
        return pool;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedhist
