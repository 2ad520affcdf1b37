#include <gtest/gtest.h>

#include "cfsim/cfsim.hpp"
#include "test_support.hpp"

using namespace cfsim;

namespace {

CMatrix gaussian(int r, int c, RandomStream& rng) {
    CMatrix X(r, c);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i) = rng.complex_gaussian();
    return X;
}

// Low-rank plus a few large columns.
struct Synthetic {
    CMatrix Y;
    CMatrix L;
    std::vector<int> outliers;
};

Synthetic synthetic(int M, int S, int rank, int n_out, double out_scale, RandomStream& rng) {
    Synthetic s;
    const DftBasis F(M);
    IndexSet idx;
    for (int i = 0; i < rank; ++i) idx.push_back(2 * i + 1);
    s.L = F.columns(idx) * gaussian(rank, S, rng);
    s.Y = s.L;
    for (int i = 0; i < n_out; ++i) {
        const int c = (7 * i + 3) % S;
        s.outliers.push_back(c);
        s.Y.col(c) += out_scale * gaussian(M, 1, rng);
    }
    return s;
}

}  // namespace

TEST(Svt, MatchesSvdOracle) {
    RandomStream r(1);
    for (auto [rows, cols] : {std::pair{6, 11}, std::pair{9, 4}}) {
        const CMatrix X = gaussian(rows, cols, r);
        const double tau = 1.3;
        Eigen::JacobiSVD<CMatrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
        RVector s = svd.singularValues();
        double nuc = 0.0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            s[i] = std::max(s[i] - tau, 0.0);
            nuc += s[i];
        }
        const CMatrix ref = svd.matrixU() * s.asDiagonal() * svd.matrixV().adjoint();
        const auto out = detail::svt(X, tau);
        EXPECT_LT((out.X - ref).norm(), 1e-10 * ref.norm());
        EXPECT_NEAR(out.nuclear_norm, nuc, 1e-10 * nuc);
    }
}

TEST(Svt, ThresholdAboveSpectrumGivesZero) {
    RandomStream r(2);
    const CMatrix X = gaussian(4, 5, r);
    EXPECT_EQ(detail::svt(X, detail::spectral_norm(X) * 1.01).X.norm(), 0.0);
}

TEST(ColumnShrink, PerColumnOracle) {
    RandomStream r(3);
    const CMatrix X = gaussian(5, 8, r);
    const double tau = 2.0;
    double n21 = 0.0;
    const CMatrix out = detail::column_shrink(X, tau, n21);
    double expect = 0.0;
    for (int c = 0; c < 8; ++c) {
        const double n = X.col(c).norm();
        const double keep = std::max(n - tau, 0.0);
        expect += keep;
        EXPECT_NEAR(out.col(c).norm(), keep, 1e-12);
        if (keep > 0) EXPECT_LT((out.col(c) / keep - X.col(c) / n).norm(), 1e-12);
    }
    EXPECT_NEAR(n21, expect, 1e-12);
}

TEST(OutlierPursuit, RecoversLowRankWithColumnOutliers) {
    RandomStream r(4);
    const auto s = synthetic(16, 200, 3, 8, 5.0, r);
    const auto res = solve_outlier_pursuit(s.Y, default_lambda(200, 0.25), RpcaOptions{1e-7, 1000});
    EXPECT_TRUE(res.converged);
    EXPECT_LT(res.residual, 1e-7);
    const DftBasis F(16);
    IndexSet truth{1, 3, 5};
    const CMatrix P = support_projector(truth, F);
    // Column space of H_hat lies in the true subspace.
    EXPECT_LT((res.H - P * res.H).norm(), 1e-3 * res.H.norm());
    for (int c : s.outliers) EXPECT_GT(res.E.col(c).norm(), 1.0);
}

TEST(OutlierPursuit, AugmentedLagrangianNonIncreasingWithinSweep) {
    RandomStream r(5);
    const auto s = synthetic(16, 100, 2, 5, 4.0, r);
    RpcaOptions opt;
    opt.trace = true;
    const auto res = solve_outlier_pursuit(s.Y, default_lambda(100, 0.25), opt);
    ASSERT_EQ(res.lagrangian_before.size(), res.lagrangian_after.size());
    ASSERT_GT(res.lagrangian_before.size(), 1u);
    for (size_t i = 0; i < res.lagrangian_before.size(); ++i) {
        EXPECT_LE(res.lagrangian_after[i], res.lagrangian_before[i] + 1e-9 * std::abs(res.lagrangian_before[i])) << i;
    }
    EXPECT_LT(res.residual_trace.back(), res.residual_trace.front());
}

TEST(OutlierPursuit, ZeroInputAndBadLambda) {
    const CMatrix Z = CMatrix::Zero(4, 6);
    const auto res = solve_outlier_pursuit(Z, 1.0);
    EXPECT_TRUE(res.converged);
    EXPECT_EQ(res.H.norm(), 0.0);
    EXPECT_THROW(solve_outlier_pursuit(Z, 0.0), std::invalid_argument);
}

TEST(OutlierPursuit, ObjectiveOfSolutionBelowTrivialSplits) {
    RandomStream r(6);
    const auto s = synthetic(16, 80, 2, 4, 5.0, r);
    const double lambda = default_lambda(80, 0.25);
    const auto res = solve_outlier_pursuit(s.Y, lambda, RpcaOptions{1e-8, 2000});
    const double f = outlier_pursuit_objective(res.H, res.E, lambda);
    EXPECT_LE(f, outlier_pursuit_objective(s.Y, CMatrix::Zero(16, 80), lambda) * (1 + 1e-6));
    EXPECT_LE(f, outlier_pursuit_objective(CMatrix::Zero(16, 80), s.Y, lambda) * (1 + 1e-6));
}

TEST(RankSelection, LargestGap) {
    EXPECT_EQ(select_rank({10, 9, 1, 0.5}, 3), 2);
    EXPECT_EQ(select_rank({10, 1, 0.9, 0.1}, 3), 1);
    EXPECT_EQ(select_rank({5, 5, 5, 0}, 2), 1);  // max_rank caps the search; first tie wins
    EXPECT_EQ(select_rank({3, 2, 1, 0}, 3), 1);
    EXPECT_THROW(select_rank({}, 1), std::invalid_argument);
}

TEST(DftRectify, ExactForDftSpannedBasis) {
    const DftBasis F(16);
    RandomStream r(7);
    const IndexSet idx{0, 14, 15};
    // Random orthonormal basis of the same span.
    Eigen::HouseholderQR<CMatrix> qr(F.columns(idx) * gaussian(3, 3, r));
    const CMatrix B = qr.householderQ() * CMatrix::Identity(16, 3);
    EXPECT_EQ(dft_rectify(B, F, 3), idx);
}

TEST(PowerEfficiency, IndexFormulaMatchesTraceFormula) {
    const DftBasis F(16);
    RandomStream r(8);
    for (int trial = 0; trial < 50; ++trial) {
        IndexSet truth, est;
        for (int i = 0; i < 16; ++i) {
            if (r.uniform() < 0.3) truth.push_back(i);
            if (r.uniform() < 0.3) est.push_back(i);
        }
        if (truth.empty() || est.empty()) continue;
        const CMatrix sigma = covariance(0.7, truth, F);
        const auto e = SubspaceEstimate::from_indices(SubspaceKind::PP, est, F);
        EXPECT_NEAR(power_efficiency(e, sigma), double(std::count_if(est.begin(), est.end(), [&](int i) { return std::count(truth.begin(), truth.end(), i) > 0; })) / est.size(), 1e-10);
    }
}

TEST(PowerEfficiency, TrueSubspaceIsOneAndZeroErrorAndBounded) {
    const DftBasis F(16);
    const IndexSet truth{3, 4, 5};
    const CMatrix sigma = covariance(2.0, truth, F);
    const auto e = SubspaceEstimate::from_indices(SubspaceKind::TRUE, truth, F);
    EXPECT_NEAR(power_efficiency(e, sigma), 1.0, 1e-12);
    EXPECT_NEAR(frobenius_error(e, sigma), 0.0, 1e-12);
    const auto wider = SubspaceEstimate::from_indices(SubspaceKind::PP, {2, 3, 4, 5, 6, 7}, F);
    EXPECT_LT(power_efficiency(wider, sigma), 1.0);
    EXPECT_GT(frobenius_error(wider, sigma), 0.0);
}

TEST(PowerEfficiency, ReconstructedCovarianceTrace) {
    const DftBasis F(8);
    const auto e = SubspaceEstimate::from_indices(SubspaceKind::PP, {1, 6}, F);
    EXPECT_NEAR(std::real(reconstruct_covariance(e, 0.3, 8).trace()), 0.3 * 8, 1e-12);
    SubspaceEstimate empty;
    EXPECT_THROW(reconstruct_covariance(empty, 1.0, 8), std::invalid_argument);
}

TEST(SubspacePipeline, HighSnrIsolatedEdgeIsExact) {
    SimConfig cfg;
    const DftBasis F(cfg.antennas_per_ru);
    const IndexSet truth{0, 15};
    const auto t = cfsim::testing::make_topology(1, 1, 16, 1e4, [](int, int) { return 1.0; }, [&](int, int) { return truth; });
    const auto g = cfsim::testing::make_graph(1, 1, 1, {{0}}, {0});
    HoppingAssignment h;
    h.order = 61;
    h.cell_of_ue = {0};
    h.square_of_cell = {1};
    h.square = {1};
    h.symbol = {1};
    const LatinSquareFamily fam(61);
    RandomStream r(9);
    const auto Y = generate_srs_for_ru(0, h, fam, t, g, F, cfg.srs_length, r);
    const auto est = estimate_subspace(Y[0], F, cfg);
    EXPECT_EQ(est.pca.rank(), 2);
    EXPECT_EQ(est.pp.indices, truth);
    EXPECT_EQ(est.diagnostics().at("pp_indices").get<IndexSet>(), truth);
}
