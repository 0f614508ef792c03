#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fcp/types.hpp"

namespace fcp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Portable random stream: std::mt19937_64 (whose output sequence is fixed by
// the standard) with every transformation to doubles written out here, since
// the standard distributions are implementation defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent stream for replication `rep` of an experiment.
    static Rng for_replication(std::uint64_t master_seed, std::uint64_t rep) {
        return Rng(splitmix64(splitmix64(master_seed) ^ splitmix64(rep + 0x632be59bd9b4e019ULL)));
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double cauchy() { return std::tan(std::numbers::pi * (uniform() - 0.5)); }

    bool coin() { return (engine_() >> 63) != 0; }

    // Uniform integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do v = engine_();
        while (v >= limit);
        return v % n;
    }

    // k distinct indices from [0, n) in draw order (partial Fisher-Yates).
    std::vector<Index> sample_without_replacement(Index n, Index k) {
        std::vector<Index> pool(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (Index i = 0; i < k; ++i) {
            const Index j = i + static_cast<Index>(below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(k));
        return pool;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fcp
