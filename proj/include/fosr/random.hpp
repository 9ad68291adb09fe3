#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fosr {

// All randomness in the library flows through this header so that runs are
// reproducible bit-for-bit across platforms. The engine is std::mt19937_64,
// whose output sequence is fixed by the C++ standard; the distributions are
// implemented here by hand because the standard library's distribution
// classes are implementation-defined.

// splitmix64 step, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Mixes a base seed with up to two stream indices (e.g. round and client id)
// into a fresh seed. derive_seed(s, a, b) != derive_seed(s, b, a) in general.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
    std::uint64_t z = splitmix64(base);
    z = splitmix64(z ^ a);
    z = splitmix64(z ^ b);
    return z;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform(); // (0, 1], keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Unbiased integer in [0, n) by rejection.
    std::size_t uniform_index(std::size_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fosr
