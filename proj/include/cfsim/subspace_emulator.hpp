#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsim/rng.hpp"
#include "cfsim/types.hpp"

namespace cfsim {

/// Start of a cyclically contiguous index set: the element whose predecessor (mod M) is absent.
inline int leftmost_index(const IndexSet& s, int M) {
    if (s.empty()) throw std::invalid_argument("leftmost_index: empty set");
    if (static_cast<int>(s.size()) >= M) return 0;
    for (int i : s) {
        const int prev = (i + M - 1) % M;
        if (!std::binary_search(s.begin(), s.end(), prev)) return i;
    }
    throw std::invalid_argument("leftmost_index: set covers every index");
}

inline IndexSet shift_indices(const IndexSet& s, int shift, int M) {
    IndexSet out;
    out.reserve(s.size());
    for (int i : s) out.push_back(((i + shift) % M + M) % M);
    std::sort(out.begin(), out.end());
    return out;
}

struct SubspaceSample {
    IndexSet truth;
    IndexSet estimate;
    double beta = 0.0;
};

struct EmulatorOutcome {
    IndexSet outcome;
    double prob = 0.0;
};

/// Empirical law of the rectified estimate given the true support anchored at {0, ..., |S|-1},
/// conditioned on equal-population LSFC bins.
struct EmpiricalSubspaceDistribution {
    static constexpr int kVersion = 1;
    int M = 0;
    double delta = 0.0;
    std::vector<double> bin_edges;  ///< num_bins + 1 values, ascending
    std::vector<std::vector<EmulatorOutcome>> bins;
    std::vector<int> bin_population;
    std::string config_hash;

    int num_bins() const { return static_cast<int>(bins.size()); }

    /// Out-of-range values are clamped to the edge bins.
    int bin_of(double beta) const {
        const auto first = bin_edges.begin() + 1;
        const auto last = bin_edges.end() - 1;
        return static_cast<int>(std::upper_bound(first, last, beta) - first);
    }

    nlohmann::json to_json() const {
        nlohmann::json jb = nlohmann::json::array();
        for (const auto& bin : bins) {
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& o : bin) entries.push_back({{"outcome", o.outcome}, {"prob", o.prob}});
            jb.push_back(entries);
        }
        return {{"version", kVersion}, {"M", M}, {"delta", delta}, {"bin_edges", bin_edges},
                {"bin_population", bin_population}, {"bins", jb}, {"config_hash", config_hash}};
    }

    static EmpiricalSubspaceDistribution from_json(const nlohmann::json& j) {
        if (j.value("version", 0) != kVersion) throw std::runtime_error("unsupported emulator distribution version");
        EmpiricalSubspaceDistribution d;
        d.M = j.at("M").get<int>();
        d.delta = j.at("delta").get<double>();
        d.bin_edges = j.at("bin_edges").get<std::vector<double>>();
        d.bin_population = j.value("bin_population", std::vector<int>{});
        d.config_hash = j.value("config_hash", std::string{});
        for (const auto& jb : j.at("bins")) {
            std::vector<EmulatorOutcome> bin;
            for (const auto& e : jb) bin.push_back({e.at("outcome").get<IndexSet>(), e.at("prob").get<double>()});
            d.bins.push_back(std::move(bin));
        }
        if (d.bins.empty() || d.bin_edges.size() != d.bins.size() + 1) {
            throw std::runtime_error("malformed emulator distribution");
        }
        return d;
    }
};

inline EmpiricalSubspaceDistribution build_distribution(std::vector<SubspaceSample> samples, int M, double delta,
                                                        int num_bins = 20) {
    if (samples.empty()) throw std::invalid_argument("build_distribution: no samples");
    std::stable_sort(samples.begin(), samples.end(),
                     [](const SubspaceSample& a, const SubspaceSample& b) { return a.beta < b.beta; });
    const int n = static_cast<int>(samples.size());
    const int B = std::min(num_bins, n);
    EmpiricalSubspaceDistribution d;
    d.M = M;
    d.delta = delta;
    d.bin_edges.push_back(samples.front().beta);
    for (int b = 0; b < B; ++b) {
        const int lo = static_cast<int>(static_cast<long>(b) * n / B);
        const int hi = static_cast<int>(static_cast<long>(b + 1) * n / B);
        std::map<IndexSet, int> counts;
        for (int i = lo; i < hi; ++i) {
            const int m = leftmost_index(samples[i].truth, M);
            ++counts[shift_indices(samples[i].estimate, -m, M)];
        }
        std::vector<EmulatorOutcome> bin;
        for (const auto& [outcome, c] : counts) bin.push_back({outcome, static_cast<double>(c) / (hi - lo)});
        d.bins.push_back(std::move(bin));
        d.bin_population.push_back(hi - lo);
        d.bin_edges.push_back(b + 1 < B ? samples[hi].beta : samples.back().beta);
    }
    return d;
}

/// Draws an outcome from the LSFC bin of `beta` and rotates it onto the support of `truth`.
inline IndexSet sample_estimate(const EmpiricalSubspaceDistribution& d, double beta, const IndexSet& truth,
                                RandomStream& rng) {
    const auto& bin = d.bins[d.bin_of(beta)];
    const double u = rng.uniform();
    double acc = 0.0;
    const IndexSet* pick = &bin.back().outcome;
    for (const auto& o : bin) {
        acc += o.prob;
        if (u < acc) {
            pick = &o.outcome;
            break;
        }
    }
    return shift_indices(*pick, leftmost_index(truth, d.M), d.M);
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    size_t i = 0;
    size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

}  // namespace cfsim
