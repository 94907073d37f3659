// Seeded, splittable random number generation for reproducible experiments.
//
// Every replicate owns an independent stream derived as a hash of the master
// seed and the replicate index, so serial and thread-parallel runs produce
// identical results. All distributions are implemented here rather than via
// <random> because libstdc++/libc++ normal_distribution outputs differ,
// which would break byte-identical output across toolchains.

#ifndef HPSLAB_RNG_HPP
#define HPSLAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace hpslab {

// splitmix64 finalizer; good avalanche, used for seeding and stream derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream seed for substream `index` of `master`.
inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ mix64(index + 0x51ED270B71A2B4ABULL));
}

inline std::uint64_t derive_stream(std::uint64_t master, std::uint64_t i, std::uint64_t j) {
    return derive_stream(derive_stream(master, i), j);
}

// xoshiro256++ with splitmix64 state expansion.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t s = seed;
        for (auto& w : state_) {
            s = mix64(s);
            w = s;
        }
        has_cached_gauss_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on (0, 1]: strictly positive so log() is always safe.
    double uniform_pos() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    }

    // Uniform on [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; second deviate cached.
    double gaussian() {
        if (has_cached_gauss_) {
            has_cached_gauss_ = false;
            return cached_gauss_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_gauss_ = r * std::sin(theta);
        has_cached_gauss_ = true;
        return r * std::cos(theta);
    }

    // +1/-1 with equal probability; unit variance.
    double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

    // Gamma(shape, 1) by Marsaglia-Tsang; requires shape >= 1.
    double gamma(double shape) {
        if (shape < 1.0) throw std::invalid_argument("gamma: shape must be >= 1");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = gaussian();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Student-t with df > 2, rescaled to unit variance.
    double student_t_unit(double df) {
        if (!(df > 2.0)) throw std::invalid_argument("student_t_unit: df must be > 2");
        const double z = gaussian();
        const double chi2 = 2.0 * gamma(df / 2.0);
        const double t = z / std::sqrt(chi2 / df);
        return t * std::sqrt((df - 2.0) / df);
    }

    // Fisher-Yates index shuffle.
    template <typename IndexVector>
    void shuffle(IndexVector& idx) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(idx[i - 1], idx[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_;
};

}  // namespace hpslab

#endif  // HPSLAB_RNG_HPP
