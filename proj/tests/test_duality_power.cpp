#include <gtest/gtest.h>

#include "cfsim/cfsim.hpp"
#include "test_support.hpp"

using namespace cfsim;
using cfsim::testing::make_graph;
using cfsim::testing::make_topology;
using cfsim::testing::random_graph;
using cfsim::testing::random_iid_topology;

TEST(Coupling, MatchesExplicitSum) {
    RandomStream r(1);
    const auto t = random_iid_topology(3, 5, 4, 10.0, r);
    const auto g = random_graph(3, 5, 2, r);
    const DftBasis F(4);
    const auto ch = sample_channel(t, F, r);
    const auto v = clzf(g, estimate_ideal(ch, g), 0.999);
    const CMatrix G = coupling_matrix(g, v, ch.h);
    for (int k = 0; k < 5; ++k) {
        for (int j = 0; j < 5; ++j) {
            Complex s = 0.0;
            for (size_t i = 0; i < g.serving[k].size(); ++i) {
                const int l = g.serving[k][i];
                for (int m = 0; m < 4; ++m) s += std::conj(v.blocks[k](m, static_cast<Eigen::Index>(i))) * ch.h[l](m, j);
            }
            EXPECT_LT(std::abs(G(k, j) - s), 1e-12);
        }
    }
}

TEST(Theta, HandBuiltTwoRuExample) {
    // UE 0 served by RUs {0,1}, UE 1 by RU {1}; M = 1 so every vector is a scalar.
    const auto t = make_topology(2, 2, 1, 2.0, [](int l, int k) { return 0.5 + l + 2 * k; }, [](int, int) { return IndexSet{0}; });
    const auto g = make_graph(2, 2, 2, {{0, 1}, {1}}, {0, 1});
    ChannelEstimateSet est;
    est.h.assign(2, CMatrix::Zero(1, 2));
    est.h[0](0, 0) = Complex(1.0, 0.0);
    est.h[1](0, 0) = Complex(0.0, 2.0);
    est.h[1](0, 1) = Complex(3.0, 0.0);
    ReceiveVectorSet v;
    v.blocks.resize(2);
    v.blocks[0] = CMatrix(1, 2);
    v.blocks[0] << Complex(0.6, 0.0), Complex(0.0, 0.8);
    v.blocks[1] = CMatrix(1, 1);
    v.blocks[1] << Complex(1.0, 0.0);
    const auto th = build_theta(g, v, est, t);
    // theta_00 = |0.6*1 + conj(0.8i)*2i|^2 = |0.6 + 1.6|^2.
    EXPECT_NEAR(th.theta(0, 0), 2.2 * 2.2, 1e-12);
    EXPECT_NEAR(th.theta(1, 1), 9.0, 1e-12);
    // UE 1 into UE 0's receiver: known at RU 1 (|conj(0.8i)*3|^2) plus beta_{0,1}/2 from RU 0 (no edge).
    const double tilde_10 = 2.4 * 2.4 + 0.5 * t.beta(0, 1);
    // UE 0 into UE 1's receiver: known at RU 1 (|1*2i|^2); RU 1 is UE 1's whole cluster.
    const double tilde_01 = 4.0;
    EXPECT_NEAR(th.theta(1, 0), tilde_10, 1e-12);
    EXPECT_NEAR(th.theta(0, 1), tilde_01, 1e-12);
    EXPECT_NEAR(th.gamma[0], 4.84 / (0.5 + tilde_10), 1e-12);
    EXPECT_NEAR(th.gamma[1], 9.0 / (0.5 + tilde_01), 1e-12);
    for (int k = 0; k < 2; ++k) {
        EXPECT_NEAR(nominal_ul_sinr(th.theta, 2.0, k), th.gamma[k], 1e-12);
        EXPECT_NEAR(th.mu[k], th.gamma[k] / ((1 + th.gamma[k]) * th.theta(k, k)), 1e-15);
    }
}

class DualityProperty : public ::testing::TestWithParam<int> {};

TEST_P(DualityProperty, DownlinkSinrEqualsUplinkAndPowerSumsToActiveCount) {
    RandomStream r(100 + GetParam());
    const int L = 2 + GetParam() % 4;
    const int K = 4 + GetParam() % 7;
    const auto t = random_iid_topology(L, K, 4, std::pow(10.0, r.uniform(0.0, 3.0)), r);
    auto g = random_graph(L, K, 3, r);
    if (GetParam() % 3 == 0) {
        // Put one UE in outage.
        for (int l : g.serving[0]) {
            auto& u = g.users[l];
            u.erase(std::find(u.begin(), u.end(), 0));
            g.edge[static_cast<size_t>(l) * K] = 0;
        }
        g.serving[0].clear();
        g.pilot[0] = kOutage;
    }
    const DftBasis F(4);
    const auto ch = sample_channel(t, F, r);
    const auto est = estimate_ideal(ch, g);
    const auto v = GetParam() % 2 ? clzf(g, est, 0.999) : lmmse_combining(g, est, noise_inflation(g, t), t.snr);
    const auto th = build_theta(g, v, est, t);
    const auto pa = solve_duality(th, t.snr);
    EXPECT_NEAR(pa.sum, g.num_active(), 1e-6 * K);
    for (int k = 0; k < K; ++k) {
        if (g.in_outage(k)) {
            EXPECT_EQ(pa.q[k], 0.0);
            continue;
        }
        EXPECT_GE(pa.q[k], 0.0);
        EXPECT_NEAR(nominal_dl_sinr(th.theta, pa.q, t.snr, k), th.gamma[k], 1e-8 * th.gamma[k]);
    }
}

INSTANTIATE_TEST_SUITE_P(Random, DualityProperty, ::testing::Range(0, 24));

TEST(SolveDuality, InconsistentSystemsThrow) {
    ThetaMatrix t;
    t.active = {1, 1};
    t.theta = RMatrix(2, 2);
    t.theta << 1.0, 10.0, 10.0, 1.0;
    t.mu = RVector::Constant(2, 1.0);
    t.gamma = RVector::Constant(2, 0.5);
    EXPECT_THROW(solve_duality(t, 1.0), std::runtime_error);  // negative power

    t.theta << 1.0, 0.0, 0.0, 1.0;
    t.mu = RVector::Constant(2, 0.25);
    EXPECT_THROW(solve_duality(t, 1.0), std::runtime_error);  // q = 1/3 each, total 2/3 instead of 2
}

TEST(SolveDuality, NoActiveUeGivesZeroPower) {
    ThetaMatrix t;
    t.active = {0, 0};
    t.theta = RMatrix::Zero(2, 2);
    t.mu = RVector::Zero(2);
    const auto pa = solve_duality(t, 1.0);
    EXPECT_EQ(pa.q.sum(), 0.0);
}
