#include <gtest/gtest.h>

#include "cfsim/cfsim.hpp"
#include "test_support.hpp"

using namespace cfsim;
using cfsim::testing::make_topology;

TEST(Dft, UnitaryAndEntryFormula) {
    for (int M : {4, 16, 64}) {
        const DftBasis F(M);
        EXPECT_LT((F.matrix().adjoint() * F.matrix() - CMatrix::Identity(M, M)).norm(), 1e-10);
        for (int m = 0; m < M; ++m) {
            for (int n = 0; n < M; ++n) {
                const Complex ref = std::exp(Complex(0.0, -2.0 * kPi * m * n / M)) / std::sqrt(double(M));
                EXPECT_LT(std::abs(F.matrix()(m, n) - ref), 1e-12);
            }
        }
    }
}

TEST(Covariance, FullSupportIsScaledIdentity) {
    const DftBasis F(16);
    IndexSet all(16);
    for (int i = 0; i < 16; ++i) all[i] = i;
    const CMatrix S = covariance(0.3, all, F);
    EXPECT_LT((S - 0.3 * CMatrix::Identity(16, 16)).norm(), 1e-12);
}

TEST(Covariance, TraceRankAndProjectorScaling) {
    const DftBasis F(32);
    for (const IndexSet& s : {IndexSet{3}, IndexSet{0, 1, 31}, IndexSet{5, 6, 7, 8}}) {
        const double beta = 2.5;
        const CMatrix S = covariance(beta, s, F);
        EXPECT_NEAR(S.trace().real(), beta * 32, 1e-10);
        const double scale = beta * 32 / s.size();
        EXPECT_LT((S * S - scale * S).norm(), 1e-9 * scale * scale);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(S);
        int nonzero = 0;
        for (int i = 0; i < 32; ++i) {
            const double ev = es.eigenvalues()[i];
            if (ev > 1e-9 * scale) {
                EXPECT_NEAR(ev, scale, 1e-9 * scale);
                ++nonzero;
            }
        }
        EXPECT_EQ(nonzero, static_cast<int>(s.size()));
    }
}

TEST(Channel, DrawsAreSupportConfined) {
    const int M = 16;
    const DftBasis F(M);
    const auto topo = make_topology(3, 4, M, 1.0, [](int l, int k) { return 0.1 * (l + 1) * (k + 1); },
                                    [](int l, int k) { return IndexSet{(l + 3 * k) % 16, (l + 3 * k + 1) % 16}; });
    RandomStream rng(2);
    const ChannelRealization r = sample_channel(topo, F, rng);
    for (int l = 0; l < 3; ++l) {
        for (int k = 0; k < 4; ++k) {
            const CMatrix P = support_projector(topo.support_of(l, k), F);
            const CVector h = r.h[l].col(k);
            EXPECT_LT((h - P * h).norm(), 1e-12 * h.norm());
        }
    }
}

TEST(Channel, SingleIndexPowerMatchesBetaM) {
    const int M = 16;
    const DftBasis F(M);
    const auto topo = make_topology(1, 1, M, 1.0, [](int, int) { return 0.7; }, [](int, int) { return IndexSet{5}; });
    RandomStream rng(3);
    double p = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) p += sample_pair(topo, F, 0, 0, rng).squaredNorm();
    // Exponential with mean beta M: standard error is mean / sqrt(n).
    EXPECT_NEAR(p / n, 0.7 * M, 4.0 * 0.7 * M / std::sqrt(double(n)));
}

TEST(Channel, EmpiricalCovarianceMatchesModel) {
    const int M = 16;
    const DftBasis F(M);
    const IndexSet s{2, 3, 4};
    const auto topo = make_topology(1, 1, M, 1.0, [](int, int) { return 1.3; }, [&](int, int) { return s; });
    RandomStream rng(4);
    CMatrix acc = CMatrix::Zero(M, M);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const CVector h = sample_pair(topo, F, 0, 0, rng);
        acc.noalias() += h * h.adjoint();
    }
    acc /= double(n);
    const CMatrix ref = covariance(1.3, s, F);
    EXPECT_LT((acc - ref).norm() / ref.norm(), 0.03);
}

TEST(Channel, IdenticalSingleIndexSupportsAreCoLinear) {
    const int M = 16;
    const DftBasis F(M);
    const auto topo = make_topology(1, 2, M, 1.0, [](int, int k) { return 1.0 + k; }, [](int, int) { return IndexSet{9}; });
    RandomStream rng(5);
    for (int t = 0; t < 100; ++t) {
        const ChannelRealization r = sample_channel(topo, F, rng);
        const CVector a = r.h[0].col(0);
        const CVector b = r.h[0].col(1);
        EXPECT_NEAR(std::abs(a.dot(b)) / (a.norm() * b.norm()), 1.0, 1e-12);
    }
}

TEST(Channel, SlotsAreIndependent) {
    const int M = 16;
    const DftBasis F(M);
    const auto topo = make_topology(1, 1, M, 1.0, [](int, int) { return 1.0; }, [](int, int) { return IndexSet{1, 2}; });
    RandomStream rng(6);
    Complex cross{0.0, 0.0};
    double power = 0.0;
    CVector prev = sample_pair(topo, F, 0, 0, rng);
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const CVector cur = sample_pair(topo, F, 0, 0, rng);
        cross += prev.dot(cur);
        power += cur.squaredNorm();
        prev = cur;
    }
    EXPECT_LT(std::abs(cross) / power, 0.02);
}

TEST(Channel, InactiveUesStayZero) {
    const int M = 8;
    const DftBasis F(M);
    const auto topo = make_topology(2, 3, M, 1.0, [](int, int) { return 1.0; }, [](int, int) { return IndexSet{0}; });
    RandomStream rng(7);
    const std::vector<char> active{1, 0, 1};
    const ChannelRealization r = sample_channel(topo, F, rng, &active);
    EXPECT_EQ(r.h[0].col(1).norm(), 0.0);
    EXPECT_EQ(r.h[1].col(1).norm(), 0.0);
    EXPECT_GT(r.h[1].col(2).norm(), 0.0);
}
