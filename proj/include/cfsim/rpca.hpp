#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "cfsim/channel.hpp"
#include "cfsim/config.hpp"
#include "cfsim/types.hpp"

namespace cfsim {

struct RpcaOptions {
    double tol = 1e-6;
    int max_iters = 500;
    double rho = 1.5;
    bool trace = false;
};

struct RpcaResult {
    CMatrix H;
    CMatrix E;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;  ///< ||Y - H - E||_F / ||Y||_F
    /// Augmented Lagrangian before and after each primal sweep (filled when tracing).
    std::vector<double> lagrangian_before;
    std::vector<double> lagrangian_after;
    std::vector<double> residual_trace;
};

namespace detail {

struct SvtOutput {
    CMatrix X;
    double nuclear_norm = 0.0;
};

/// Singular value soft-thresholding via the Hermitian eigenproblem of the smaller Gram matrix.
inline SvtOutput svt(const CMatrix& X, double tau) {
    const bool wide = X.rows() <= X.cols();
    const CMatrix gram = wide ? CMatrix(X * X.adjoint()) : CMatrix(X.adjoint() * X);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram);
    const RVector& ev = eig.eigenvalues();
    const CMatrix& U = eig.eigenvectors();
    SvtOutput out;
    std::vector<Eigen::Index> keep;
    RVector gain(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double sigma = std::sqrt(std::max(ev[i], 0.0));
        if (sigma > tau) {
            keep.push_back(i);
            gain[i] = (sigma - tau) / sigma;
            out.nuclear_norm += sigma - tau;
        }
    }
    if (keep.empty()) {
        out.X = CMatrix::Zero(X.rows(), X.cols());
        return out;
    }
    CMatrix Uk(U.rows(), static_cast<Eigen::Index>(keep.size()));
    RVector gk(static_cast<Eigen::Index>(keep.size()));
    for (size_t c = 0; c < keep.size(); ++c) {
        Uk.col(static_cast<Eigen::Index>(c)) = U.col(keep[c]);
        gk[static_cast<Eigen::Index>(c)] = gain[keep[c]];
    }
    if (wide) {
        out.X = Uk * gk.asDiagonal() * (Uk.adjoint() * X);
    } else {
        out.X = (X * Uk) * gk.asDiagonal() * Uk.adjoint();
    }
    return out;
}

/// Column-wise l2 soft-thresholding; returns the l2,1 norm of the result through `norm21`.
inline CMatrix column_shrink(const CMatrix& X, double tau, double& norm21) {
    CMatrix out = CMatrix::Zero(X.rows(), X.cols());
    norm21 = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double n = X.col(c).norm();
        if (n > tau) {
            out.col(c) = X.col(c) * ((n - tau) / n);
            norm21 += n - tau;
        }
    }
    return out;
}

inline double nuclear_norm(const CMatrix& X) {
    if (X.size() == 0) return 0.0;
    Eigen::JacobiSVD<CMatrix> svd(X);
    return svd.singularValues().sum();
}

inline double norm21(const CMatrix& X) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < X.cols(); ++c) s += X.col(c).norm();
    return s;
}

inline double spectral_norm(const CMatrix& X) {
    Eigen::JacobiSVD<CMatrix> svd(X);
    return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

}  // namespace detail

/// Objective of the column-sparse robust PCA program.
inline double outlier_pursuit_objective(const CMatrix& H, const CMatrix& E, double lambda) {
    return detail::nuclear_norm(H) + lambda * detail::norm21(E);
}

/// Inexact augmented Lagrangian method for min ||H||_* + lambda ||E||_{2,1} s.t. Y = H + E.
/// Alternates singular-value thresholding on H and column shrinkage on E, then a dual ascent step
/// with a geometrically increasing penalty. Stops when ||Y - H - E||_F / ||Y||_F < tol.
inline RpcaResult solve_outlier_pursuit(const CMatrix& Y, double lambda, const RpcaOptions& opt = {}) {
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_outlier_pursuit: lambda must be positive");
    RpcaResult res;
    res.H = CMatrix::Zero(Y.rows(), Y.cols());
    res.E = CMatrix::Zero(Y.rows(), Y.cols());
    const double ynorm = Y.norm();
    if (ynorm == 0.0) {
        res.converged = true;
        return res;
    }
    double max_col = 0.0;
    for (Eigen::Index c = 0; c < Y.cols(); ++c) max_col = std::max(max_col, Y.col(c).norm());
    const double spec = detail::spectral_norm(Y);
    CMatrix Lambda = Y / std::max(spec, max_col / lambda);
    double mu = 1.25 / spec;
    const double mu_max = mu * 1e7;

    CMatrix H = res.H;
    CMatrix E = res.E;
    double best_residual = 1.0;
    double h_nuc = 0.0;
    double e_21 = 0.0;
    auto augmented = [&](const CMatrix& Hc, double hn, const CMatrix& Ec, double en) {
        const CMatrix R = Y - Hc - Ec;
        return hn + lambda * en + std::real((Lambda.adjoint() * R).trace()) + 0.5 * mu * R.squaredNorm();
    };
    for (int it = 1; it <= opt.max_iters; ++it) {
        if (opt.trace) res.lagrangian_before.push_back(augmented(H, h_nuc, E, e_21));
        auto svt = detail::svt(Y - E + Lambda / mu, 1.0 / mu);
        H = std::move(svt.X);
        h_nuc = svt.nuclear_norm;
        E = detail::column_shrink(Y - H + Lambda / mu, lambda / mu, e_21);
        if (opt.trace) res.lagrangian_after.push_back(augmented(H, h_nuc, E, e_21));
        const CMatrix R = Y - H - E;
        const double residual = R.norm() / ynorm;
        if (opt.trace) res.residual_trace.push_back(residual);
        res.iterations = it;
        if (residual < best_residual) {
            best_residual = residual;
            res.H = H;
            res.E = E;
            res.residual = residual;
        }
        if (residual < opt.tol) {
            res.converged = true;
            break;
        }
        Lambda += mu * R;
        mu = std::min(mu * opt.rho, mu_max);
    }
    return res;
}

/// lambda = scale * 3 / sqrt(log S).
inline double default_lambda(int S, double scale) {
    return scale * 3.0 / std::sqrt(std::log(static_cast<double>(std::max(S, 3))));
}

/// Number of dominant singular values: argmax of consecutive gaps over the first `max_rank` positions,
/// ties resolved to the smallest rank.
inline int select_rank(const std::vector<double>& sv, int max_rank) {
    if (sv.empty()) throw std::invalid_argument("select_rank: empty spectrum");
    const int last = std::min<int>(static_cast<int>(sv.size()) - 1, max_rank);
    int best = 1;
    double best_gap = -1.0;
    for (int i = 1; i <= last; ++i) {
        const double gap = sv[i - 1] - sv[i];
        if (gap > best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return best;
}

/// Indices of the r DFT columns maximising F_i^H B B^H F_i, sorted ascending; equal scores go to the lower index.
inline IndexSet dft_rectify(const CMatrix& basis, const DftBasis& F, int r) {
    const int M = F.size();
    const RVector score = (F.matrix().adjoint() * basis).rowwise().squaredNorm();
    std::vector<int> idx(M);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] > score[b] + 1e-12; });
    IndexSet out(idx.begin(), idx.begin() + std::min(r, M));
    std::sort(out.begin(), out.end());
    return out;
}

enum class SubspaceKind { PCA, PP, TRUE, EMULATED };

inline const char* to_string(SubspaceKind k) {
    switch (k) {
        case SubspaceKind::PCA: return "PCA";
        case SubspaceKind::PP: return "PP";
        case SubspaceKind::TRUE: return "TRUE";
        case SubspaceKind::EMULATED: return "EMULATED";
    }
    return "?";
}

struct SubspaceEstimate {
    SubspaceKind kind = SubspaceKind::TRUE;
    CMatrix basis;        ///< M x r, orthonormal columns
    IndexSet indices;     ///< DFT columns for PP / TRUE / EMULATED
    int rank() const { return static_cast<int>(basis.cols()); }

    static SubspaceEstimate from_indices(SubspaceKind kind, IndexSet idx, const DftBasis& F) {
        SubspaceEstimate e;
        e.kind = kind;
        std::sort(idx.begin(), idx.end());
        e.basis = F.columns(idx);
        e.indices = std::move(idx);
        return e;
    }
};

/// Sigma_h = (beta M / r) B B^H.
inline CMatrix reconstruct_covariance(const SubspaceEstimate& est, double beta, int M) {
    if (est.rank() < 1) throw std::invalid_argument("reconstruct_covariance: empty subspace");
    return (beta * M / est.rank()) * est.basis * est.basis.adjoint();
}

inline double power_efficiency(const SubspaceEstimate& est, const CMatrix& sigma) {
    const CMatrix sh = reconstruct_covariance(est, std::real(sigma.trace()) / sigma.rows(), static_cast<int>(sigma.rows()));
    return std::real((sigma * sh).trace()) / std::real((sigma * sigma).trace());
}

inline double frobenius_error(const SubspaceEstimate& est, const CMatrix& sigma) {
    const CMatrix sh = reconstruct_covariance(est, std::real(sigma.trace()) / sigma.rows(), static_cast<int>(sigma.rows()));
    return (sigma - sh).norm() / sigma.norm();
}

/// Closed form of the power efficiency for DFT index sets: |S cap S_hat| / |S_hat|.
inline double power_efficiency_indices(const IndexSet& truth, const IndexSet& est) {
    int common = 0;
    for (int i : est) common += std::count(truth.begin(), truth.end(), i) > 0 ? 1 : 0;
    return static_cast<double>(common) / static_cast<double>(est.size());
}

struct SubspacePipelineResult {
    RpcaResult rpca;
    std::vector<double> singular_values;
    SubspaceEstimate pca;
    SubspaceEstimate pp;

    nlohmann::json diagnostics() const {
        return {{"iterations", rpca.iterations},
                {"converged", rpca.converged},
                {"residual", rpca.residual},
                {"singular_values", singular_values},
                {"rank", pca.rank()},
                {"pp_indices", pp.indices},
                {"residual_trace", rpca.residual_trace}};
    }
};

/// R-PCA, gap-based rank selection on H_hat, then DFT rectification.
inline SubspacePipelineResult estimate_subspace(const CMatrix& Y, const DftBasis& F, double lambda, int max_rank,
                                                const RpcaOptions& opt = {}) {
    SubspacePipelineResult out;
    out.rpca = solve_outlier_pursuit(Y, lambda, opt);
    const CMatrix& H = out.rpca.H;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(CMatrix(H * H.adjoint()));
    const Eigen::Index M = H.rows();
    out.singular_values.resize(static_cast<size_t>(M));
    for (Eigen::Index i = 0; i < M; ++i) {
        out.singular_values[static_cast<size_t>(i)] = std::sqrt(std::max(eig.eigenvalues()[M - 1 - i], 0.0));
    }
    const int r = select_rank(out.singular_values, max_rank);
    out.pca.kind = SubspaceKind::PCA;
    out.pca.basis = eig.eigenvectors().rightCols(r).rowwise().reverse();
    out.pp = SubspaceEstimate::from_indices(SubspaceKind::PP, dft_rectify(out.pca.basis, F, r), F);
    return out;
}

inline SubspacePipelineResult estimate_subspace(const CMatrix& Y, const DftBasis& F, const SimConfig& cfg) {
    RpcaOptions opt;
    opt.tol = cfg.rpca_tol;
    opt.max_iters = cfg.rpca_max_iters;
    return estimate_subspace(Y, F, default_lambda(static_cast<int>(Y.cols()), cfg.rpca_lambda_scale),
                             cfg.effective_max_rank(), opt);
}

}  // namespace cfsim
