#include <gtest/gtest.h>

#include <map>

#include "cfsim/cfsim.hpp"

using namespace cfsim;

TEST(Emulator, LeftmostIndexHandlesWrap) {
    EXPECT_EQ(leftmost_index({3, 4, 5}, 16), 3);
    EXPECT_EQ(leftmost_index({0, 1, 15}, 16), 15);
    EXPECT_EQ(leftmost_index({7}, 16), 7);
    IndexSet all(16);
    for (int i = 0; i < 16; ++i) all[i] = i;
    EXPECT_EQ(leftmost_index(all, 16), 0);
    EXPECT_THROW(leftmost_index({}, 16), std::invalid_argument);
}

TEST(Emulator, ShiftIndicesWrapsAndSorts) {
    EXPECT_EQ(shift_indices({14, 15}, 3, 16), (IndexSet{1, 2}));
    EXPECT_EQ(shift_indices({0, 1}, -1, 16), (IndexSet{0, 15}));
}

TEST(Emulator, BinsAreEquallyPopulated) {
    RandomStream r(1);
    for (int n : {20, 57, 1000, 1013}) {
        std::vector<SubspaceSample> s;
        for (int i = 0; i < n; ++i) s.push_back({{3}, {3}, std::pow(10.0, r.uniform(-12, -6))});
        const auto d = build_distribution(s, 16, kPi / 8);
        ASSERT_EQ(d.num_bins(), std::min(20, n));
        const auto [lo, hi] = std::minmax_element(d.bin_population.begin(), d.bin_population.end());
        EXPECT_LE(*hi - *lo, 1);
        EXPECT_EQ(std::accumulate(d.bin_population.begin(), d.bin_population.end(), 0), n);
        EXPECT_TRUE(std::is_sorted(d.bin_edges.begin(), d.bin_edges.end()));
        for (const auto& bin : d.bins) {
            double p = 0.0;
            for (const auto& o : bin) p += o.prob;
            EXPECT_NEAR(p, 1.0, 1e-12);
        }
    }
}

TEST(Emulator, OutcomesAreRelativeToSupportStart) {
    // Truth starts at 15 and 5; estimate is one index to the right of the start in both cases.
    std::vector<SubspaceSample> s{{{15, 0}, {0}, 1.0}, {{5, 6}, {6}, 2.0}};
    const auto d = build_distribution(s, 16, kPi / 8, 1);
    ASSERT_EQ(d.bins[0].size(), 1u);
    EXPECT_EQ(d.bins[0][0].outcome, (IndexSet{1}));
    EXPECT_DOUBLE_EQ(d.bins[0][0].prob, 1.0);
}

TEST(Emulator, SamplingReproducesBinFrequenciesAndRotates) {
    std::vector<SubspaceSample> s;
    for (int i = 0; i < 30; ++i) s.push_back({{2, 3}, {2, 3}, 1.0 + i});
    for (int i = 0; i < 10; ++i) s.push_back({{2, 3}, {3}, 1.0 + i});
    const auto d = build_distribution(s, 16, kPi / 8, 1);
    RandomStream r(2);
    std::map<IndexSet, int> hits;
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++hits[sample_estimate(d, 5.0, {14, 15}, r)];
    EXPECT_EQ(hits.size(), 2u);
    const double full = hits[IndexSet{14, 15}] / double(n);
    const double single = hits[IndexSet{15}] / double(n);
    EXPECT_NEAR(full, 0.75, 0.01);
    EXPECT_NEAR(single, 0.25, 0.01);
}

TEST(Emulator, BinOfClampsOutOfRange) {
    std::vector<SubspaceSample> s;
    for (int i = 0; i < 100; ++i) s.push_back({{0}, {0}, double(i)});
    const auto d = build_distribution(s, 16, kPi / 8, 10);
    EXPECT_EQ(d.bin_of(-5.0), 0);
    EXPECT_EQ(d.bin_of(1e9), 9);
    EXPECT_EQ(d.bin_of(0.0), 0);
    EXPECT_EQ(d.bin_of(55.0), 5);
}

TEST(Emulator, JsonRoundTripAndVersionCheck) {
    RandomStream r(3);
    std::vector<SubspaceSample> s;
    for (int i = 0; i < 60; ++i) s.push_back({{1, 2}, {static_cast<int>(r.uniform() * 3) + 1}, r.uniform()});
    auto d = build_distribution(s, 16, kPi / 8, 6);
    d.config_hash = "abc";
    const auto j = d.to_json();
    const auto d2 = EmpiricalSubspaceDistribution::from_json(j);
    EXPECT_EQ(d2.to_json().dump(), j.dump());
    auto bad = j;
    bad["version"] = 999;
    EXPECT_THROW(EmpiricalSubspaceDistribution::from_json(bad), std::runtime_error);
    auto broken = j;
    broken["bin_edges"].erase(0);
    EXPECT_THROW(EmpiricalSubspaceDistribution::from_json(broken), std::runtime_error);
}

TEST(KsDistance, Oracle) {
    EXPECT_DOUBLE_EQ(ks_distance({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_DOUBLE_EQ(ks_distance({1, 2}, {3, 4}), 1.0);
    EXPECT_DOUBLE_EQ(ks_distance({1, 2, 3, 4}, {2.5}), 0.5);
    RandomStream r(4);
    std::vector<double> a, b;
    for (int i = 0; i < 300; ++i) {
        a.push_back(r.uniform());
        b.push_back(r.uniform());
    }
    // Brute force: sup over all sample points of |F_a - F_b|.
    double ref = 0.0;
    std::vector<double> pts = a;
    pts.insert(pts.end(), b.begin(), b.end());
    for (double x : pts) {
        const double fa = std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; }) / 300.0;
        const double fb = std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; }) / 300.0;
        ref = std::max(ref, std::abs(fa - fb));
    }
    EXPECT_NEAR(ks_distance(a, b), ref, 1e-12);
}

TEST(EmulatorDataset, SmallDatasetHasValidSchemaAndPeRisesWithBeta) {
    SimConfig cfg;
    std::vector<std::string> warnings;
    const auto ds = build_emulator_dataset(cfg, 11, 0, 3, 1, &warnings);
    EXPECT_TRUE(warnings.empty());
    ASSERT_GT(ds.records.size(), 100u);
    const auto j = ds.distribution.to_json();
    for (const char* key : {"version", "M", "delta", "bin_edges", "bin_population", "bins", "config_hash"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(ds.distribution.config_hash, config_hash(cfg));
    const auto summary = dataset_bin_summary(ds);
    const int B = ds.distribution.num_bins();
    double lo = 0.0, hi = 0.0;
    for (int b = 0; b < B / 4; ++b) lo += summary[b]["mean_pe_pp"].get<double>();
    for (int b = B - B / 4; b < B; ++b) hi += summary[b]["mean_pe_pp"].get<double>();
    EXPECT_GT(hi, lo);
    for (const auto& r : ds.records) {
        EXPECT_GE(r.pe_pp, -1e-12);
        EXPECT_LE(r.pe_pp, 1.0 + 1e-9);
    }
}
