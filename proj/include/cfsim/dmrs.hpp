#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfsim/channel.hpp"
#include "cfsim/cluster.hpp"
#include "cfsim/rng.hpp"

namespace cfsim {

/// Per-RU M x tau_p DMRS observation.
struct PilotField {
    std::vector<CMatrix> Y;
    double snr = 0.0;
    int pilot_dim = 0;
};

/// Y_l = sum_i h_{l,i} phi_{t_i}^H + Z with phi_t = sqrt(tau_p SNR) e_t. Outage UEs send no pilot.
/// `with_noise = false` drops Z (test hook).
inline PilotField build_pilot_field(const ClusterGraph& g, const ChannelRealization& r, double snr,
                                    RandomStream& rng, bool with_noise = true) {
    PilotField f;
    f.snr = snr;
    f.pilot_dim = g.pilot_dim;
    const double amp = std::sqrt(g.pilot_dim * snr);
    const Eigen::Index M = r.h.front().rows();
    f.Y.reserve(g.num_rus);
    for (int l = 0; l < g.num_rus; ++l) {
        CMatrix Y = CMatrix::Zero(M, g.pilot_dim);
        for (int i = 0; i < g.num_ues; ++i) {
            if (g.in_outage(i)) continue;
            Y.col(g.pilot[i]) += amp * r.h[l].col(i);
        }
        if (with_noise) {
            for (Eigen::Index t = 0; t < Y.cols(); ++t) {
                for (Eigen::Index m = 0; m < M; ++m) Y(m, t) += rng.complex_gaussian();
            }
        }
        f.Y.push_back(std::move(Y));
    }
    return f;
}

enum class EstimateMethod { PilotMatching, SubspaceProjection };

/// Per-RU M x K estimates; only columns k in U_l are populated.
struct ChannelEstimateSet {
    std::vector<CMatrix> h;
    EstimateMethod method = EstimateMethod::PilotMatching;
};

/// h_pm = Y phi_{t_k} / (tau_p SNR) on every edge.
inline ChannelEstimateSet estimate_pm(const PilotField& f, const ClusterGraph& g) {
    ChannelEstimateSet out;
    out.method = EstimateMethod::PilotMatching;
    const double scale = 1.0 / std::sqrt(f.pilot_dim * f.snr);
    const Eigen::Index M = f.Y.front().rows();
    out.h.assign(g.num_rus, CMatrix::Zero(M, g.num_ues));
    for (int l = 0; l < g.num_rus; ++l) {
        for (int k : g.users[l]) out.h[l].col(k) = scale * f.Y[l].col(g.pilot[k]);
    }
    return out;
}

/// Orthonormal subspace per edge; `basis[l * K + k]` is M x r (empty off the edge set).
struct EdgeSubspaces {
    int num_ues = 0;
    std::vector<CMatrix> basis;

    const CMatrix& at(int l, int k) const { return basis[static_cast<size_t>(l) * num_ues + k]; }
    CMatrix& at(int l, int k) { return basis[static_cast<size_t>(l) * num_ues + k]; }
};

/// h_sp = F_hat F_hat^H h_pm on every edge.
inline ChannelEstimateSet estimate_sp(const ChannelEstimateSet& pm, const ClusterGraph& g, const EdgeSubspaces& sub) {
    ChannelEstimateSet out;
    out.method = EstimateMethod::SubspaceProjection;
    out.h.assign(pm.h.size(), CMatrix::Zero(pm.h.front().rows(), pm.h.front().cols()));
    for (int l = 0; l < g.num_rus; ++l) {
        for (int k : g.users[l]) {
            const CMatrix& B = sub.at(l, k);
            if (B.cols() == 0) throw std::invalid_argument("estimate_sp: missing subspace for an edge");
            out.h[l].col(k) = B * (B.adjoint() * pm.h[l].col(k));
        }
    }
    return out;
}

/// Ideal partial CSI: the true channel blocks on the edge set.
inline ChannelEstimateSet estimate_ideal(const ChannelRealization& r, const ClusterGraph& g) {
    ChannelEstimateSet out;
    out.h.assign(r.h.size(), CMatrix::Zero(r.h.front().rows(), r.h.front().cols()));
    for (int l = 0; l < g.num_rus; ++l) {
        for (int k : g.users[l]) out.h[l].col(k) = r.h[l].col(k);
    }
    return out;
}

}  // namespace cfsim
