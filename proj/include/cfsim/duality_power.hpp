#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/LU>

#include "cfsim/cluster.hpp"
#include "cfsim/dmrs.hpp"
#include "cfsim/receivers.hpp"
#include "cfsim/topology.hpp"

namespace cfsim {

/// coupling(k, j) = v_k^H h_j for the given per-RU channel blocks (M x K each).
inline CMatrix coupling_matrix(const ClusterGraph& g, const ReceiveVectorSet& v, const std::vector<CMatrix>& h) {
    CMatrix G = CMatrix::Zero(g.num_ues, g.num_ues);
    for (int k = 0; k < g.num_ues; ++k) {
        if (g.in_outage(k)) continue;
        const auto& C = g.serving[k];
        for (size_t i = 0; i < C.size(); ++i) {
            G.row(k).noalias() += v.blocks[k].col(static_cast<Eigen::Index>(i)).adjoint() * h[C[i]];
        }
    }
    return G;
}

/// Theta with theta_kk on the diagonal and theta~_{k,j} off it, plus the companion UL quantities.
struct ThetaMatrix {
    RMatrix theta;   ///< K x K
    RVector gamma;   ///< nominal UL SINR per UE
    RVector mu;
    std::vector<char> active;
};

/// theta~_{j,k} = |sum_{l in C_k cap C_j} v_{l,k}^H h_{l,j}|^2 + (1/|C_k|) sum_{l in C_k \ C_j} beta_{l,j},
/// built from the CSI the clusters hold (`est`, zero off the edge set).
inline ThetaMatrix build_theta(const ClusterGraph& g, const ReceiveVectorSet& v, const ChannelEstimateSet& est,
                               const NetworkTopology& topo) {
    const int K = g.num_ues;
    const CMatrix known = coupling_matrix(g, v, est.h);
    ThetaMatrix t;
    t.theta = RMatrix::Zero(K, K);
    t.gamma = RVector::Zero(K);
    t.mu = RVector::Zero(K);
    t.active = g.active_mask();
    // tilde(j, k) stored temporarily as the UL interference from j into k's receiver.
    RMatrix tilde = RMatrix::Zero(K, K);
    for (int k = 0; k < K; ++k) {
        if (!t.active[k]) continue;
        const auto& C = g.serving[k];
        const double inv_size = 1.0 / static_cast<double>(C.size());
        for (int j = 0; j < K; ++j) {
            if (!t.active[j] || j == k) continue;
            double unknown = 0.0;
            for (int l : C) {
                if (!g.has_edge(l, j)) unknown += topo.beta(l, j);
            }
            tilde(j, k) = std::norm(known(k, j)) + inv_size * unknown;
        }
        t.theta(k, k) = std::norm(known(k, k));
    }
    for (int k = 0; k < K; ++k) {
        if (!t.active[k]) continue;
        double den = 1.0 / topo.snr;
        for (int j = 0; j < K; ++j) {
            if (j != k) den += tilde(j, k);
        }
        t.gamma[k] = t.theta(k, k) / den;
        t.mu[k] = t.theta(k, k) > 0.0 ? t.gamma[k] / ((1.0 + t.gamma[k]) * t.theta(k, k)) : 0.0;
    }
    // Theta(k, j) = theta~_{k,j}: interference from j's cluster vector onto UE k.
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < K; ++j) {
            if (j != k) t.theta(k, j) = tilde(k, j);
        }
    }
    return t;
}

/// theta_kk q_k / (1/SNR + sum_{j != k} theta~_{k,j} q_j).
inline double nominal_dl_sinr(const RMatrix& theta, const RVector& q, double snr, int k) {
    double den = 1.0 / snr;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        if (j != k) den += theta(k, j) * q[j];
    }
    return theta(k, k) * q[k] / den;
}

/// theta_kk / (1/SNR + sum_{j != k} theta~_{j,k}); the same gamma stored by build_theta.
inline double nominal_ul_sinr(const RMatrix& theta, double snr, int k) {
    double den = 1.0 / snr;
    for (Eigen::Index j = 0; j < theta.rows(); ++j) {
        if (j != k) den += theta(j, k);
    }
    return theta(k, k) / den;
}

struct PowerAllocation {
    RVector q;
    double sum = 0.0;
};

/// Solves (I - diag(mu) Theta) q = mu / SNR over the active UEs; inactive UEs get q = 0.
/// A negative component or a total power different from the number of active UEs throws.
inline PowerAllocation solve_duality(const ThetaMatrix& t, double snr, double tol = 1e-6) {
    const int K = static_cast<int>(t.mu.size());
    std::vector<int> idx;
    for (int k = 0; k < K; ++k) {
        if (t.active[k]) idx.push_back(k);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
    PowerAllocation out;
    out.q = RVector::Zero(K);
    if (n == 0) return out;
    RMatrix A(n, n);
    RVector b(n);
    bool all_positive = true;
    for (Eigen::Index r = 0; r < n; ++r) {
        const int k = idx[r];
        all_positive = all_positive && t.theta(k, k) > 0.0;
        for (Eigen::Index c = 0; c < n; ++c) A(r, c) = (r == c ? 1.0 : 0.0) - t.mu[k] * t.theta(k, idx[c]);
        b[r] = t.mu[k] / snr;
    }
    Eigen::FullPivLU<RMatrix> lu(A);
    if (!lu.isInvertible()) throw std::runtime_error("solve_duality: singular system");
    const RVector x = lu.solve(b);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (x[r] < -tol * n) {
            std::ostringstream msg;
            msg << "solve_duality: negative power " << x[r] << " for UE " << idx[r];
            throw std::runtime_error(msg.str());
        }
        out.q[idx[r]] = std::max(0.0, x[r]);
    }
    out.sum = out.q.sum();
    if (all_positive && std::abs(out.sum - n) > tol * n) {
        std::ostringstream msg;
        msg << "solve_duality: total power " << out.sum << " differs from " << n;
        throw std::runtime_error(msg.str());
    }
    return out;
}

}  // namespace cfsim
