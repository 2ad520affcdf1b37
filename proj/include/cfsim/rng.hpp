#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include "cfsim/types.hpp"

namespace cfsim {

/// Purposes of the independent random streams derived from a master seed.
enum class StreamPurpose : std::uint64_t {
    Topology = 1,
    Cluster = 2,
    Fading = 3,
    PilotNoise = 4,
    Srs = 5,
    Emulator = 6,
    Lsfd = 7,
    Bound = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based seed derivation: master -> path[0] -> path[1] -> ...
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (std::uint64_t p : path) {
        s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t run, std::uint64_t topology,
                                 StreamPurpose purpose) {
    return derive_seed(master, {run, topology, static_cast<std::uint64_t>(purpose)});
}

/// A seeded random stream. Every worker owns its own instance.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
    double gaussian() { return normal_(engine_); }
    bool bernoulli(double p) { return uniform_(engine_) < p; }

    /// Circularly-symmetric CN(0, 1).
    Complex complex_gaussian() {
        const double re = normal_(engine_);
        const double im = normal_(engine_);
        return {re * M_SQRT1_2, im * M_SQRT1_2};
    }

    CVector complex_gaussian_vector(Eigen::Index n, double variance = 1.0) {
        CVector v(n);
        const double scale = std::sqrt(variance);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * complex_gaussian();
        return v;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cfsim
