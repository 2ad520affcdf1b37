#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Cholesky>

#include "cfsim/cluster.hpp"
#include "cfsim/dmrs.hpp"
#include "cfsim/topology.hpp"

namespace cfsim {

/// Unit-norm cluster vectors: blocks[k] is M x |C_k| with column i belonging to RU serving[k][i].
/// Outage UEs hold an empty matrix.
struct ReceiveVectorSet {
    std::vector<CMatrix> blocks;
    int exclusions = 0;  ///< CLZF interferers left un-nulled
};

/// sigma^2_l = 1 + SNR * sum of beta_{l,j} over active UEs outside U_l.
inline std::vector<double> noise_inflation(const ClusterGraph& g, const NetworkTopology& topo) {
    std::vector<double> s(g.num_rus, 1.0);
    for (int l = 0; l < g.num_rus; ++l) {
        for (int j = 0; j < g.num_ues; ++j) {
            if (!g.in_outage(j) && !g.has_edge(l, j)) s[l] += topo.snr * topo.beta(l, j);
        }
    }
    return s;
}

/// Cluster-level zero forcing from the partial CSI `est`. Interferers are nulled in decreasing order of
/// channel norm; one whose span would leave h_k a component below sqrt(1 - c^2) ||h_k|| is excluded and its
/// interference tolerated. With a single interferer this is the plain cosine test against c.
inline CMatrix clzf_vector(const ClusterGraph& g, const ChannelEstimateSet& est, int k, double collinearity,
                           std::vector<int>* excluded = nullptr) {
    const PartialChannelView view = partial_channel_view(g, est.h, k);
    const int M = static_cast<int>(est.h.front().rows());
    const int ck = view.column_of(k);
    const CVector hk = view.H.col(ck);
    const double floor_norm = std::sqrt(std::max(0.0, 1.0 - collinearity * collinearity)) * hk.norm();

    std::vector<Eigen::Index> order;
    for (Eigen::Index c = 0; c < view.H.cols(); ++c) {
        if (c != ck && view.H.col(c).norm() > 0.0) order.push_back(c);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return view.H.col(a).norm() > view.H.col(b).norm(); });

    if (excluded) excluded->clear();
    CMatrix Q(view.H.rows(), 0);
    CVector v = hk;
    for (Eigen::Index c : order) {
        const CVector h = view.H.col(c);
        CVector r = h - Q * (Q.adjoint() * h);
        r -= Q * (Q.adjoint() * r);
        const double rn = r.norm();
        if (rn <= 1e-10 * h.norm()) continue;  // already in the nulled span
        const CVector q = r / rn;
        const CVector next = v - q * q.dot(v);
        if (next.norm() < floor_norm) {
            if (excluded) excluded->push_back(view.ues[static_cast<size_t>(c)]);
            continue;
        }
        Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
        Q.col(Q.cols() - 1) = q;
        v = next;
    }
    v -= Q * (Q.adjoint() * v);
    v /= v.norm();
    CMatrix out(M, static_cast<Eigen::Index>(view.rus.size()));
    for (size_t i = 0; i < view.rus.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = v.segment(static_cast<Eigen::Index>(i) * M, M);
    return out;
}

inline ReceiveVectorSet clzf(const ClusterGraph& g, const ChannelEstimateSet& est, double collinearity) {
    ReceiveVectorSet out;
    out.blocks.resize(g.num_ues);
    for (int k = 0; k < g.num_ues; ++k) {
        if (g.in_outage(k)) continue;
        std::vector<int> ex;
        out.blocks[k] = clzf_vector(g, est, k, collinearity, &ex);
        out.exclusions += static_cast<int>(ex.size());
    }
    return out;
}

/// Per-RU LMMSE vectors v_{l,k} = (sigma^2_l I + SNR sum_{j in U_l} h_j h_j^H)^{-1} h_k; M x K per RU,
/// populated on the edge set only.
inline std::vector<CMatrix> local_lmmse(const ClusterGraph& g, const ChannelEstimateSet& est,
                                        const std::vector<double>& sigma2, double snr) {
    const Eigen::Index M = est.h.front().rows();
    std::vector<CMatrix> V(g.num_rus, CMatrix::Zero(M, g.num_ues));
    for (int l = 0; l < g.num_rus; ++l) {
        const auto& U = g.users[l];
        if (U.empty()) continue;
        CMatrix Hl(M, static_cast<Eigen::Index>(U.size()));
        for (size_t i = 0; i < U.size(); ++i) Hl.col(static_cast<Eigen::Index>(i)) = est.h[l].col(U[i]);
        CMatrix A = snr * Hl * Hl.adjoint();
        A.diagonal().array() += sigma2[l];
        const CMatrix sol = A.llt().solve(Hl);
        for (size_t i = 0; i < U.size(); ++i) V[l].col(U[i]) = sol.col(static_cast<Eigen::Index>(i));
    }
    return V;
}

/// Cluster-level quantities after local combining for UE k: a, G G^H and the diagonal of D.
struct CombiningStats {
    CVector a;
    CMatrix GGh;
    RVector d;

    CMatrix gamma(double snr) const {
        CMatrix G = snr * GGh;
        G.diagonal() += d.cast<Complex>();
        return G;
    }
};

inline CombiningStats combining_stats(const ClusterGraph& g, const std::vector<CMatrix>& V,
                                      const ChannelEstimateSet& est, const std::vector<double>& sigma2, int k) {
    const auto& C = g.serving[k];
    const Eigen::Index n = static_cast<Eigen::Index>(C.size());
    CombiningStats s;
    s.a.resize(n);
    s.d.resize(n);
    s.GGh = CMatrix::Zero(n, n);
    const std::vector<int> others = g.cluster_users(k);
    CVector gcol(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = C[i];
        s.a[i] = V[l].col(k).dot(est.h[l].col(k));
        s.d[i] = sigma2[l] * V[l].col(k).squaredNorm();
    }
    for (int j : others) {
        if (j == k) continue;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int l = C[i];
            gcol[i] = g.has_edge(l, j) ? V[l].col(k).dot(est.h[l].col(j)) : Complex(0.0);
        }
        s.GGh += gcol * gcol.adjoint();
    }
    return s;
}

/// SNR |w^H a|^2 / (w^H Gamma w).
inline double nominal_combining_sinr(const CombiningStats& s, const CVector& w, double snr) {
    const double num = snr * std::norm(w.dot(s.a));
    const double den = std::real(w.dot(s.gamma(snr) * w));
    return num / den;
}

inline CVector optimal_combining_weights(const CombiningStats& s, double snr) {
    return s.gamma(snr).llt().solve(s.a);
}

/// Stacks w_i v_{l_i,k} and normalises.
inline CMatrix assemble_cluster_vector(const ClusterGraph& g, const std::vector<CMatrix>& V, const CVector& w, int k) {
    const auto& C = g.serving[k];
    CMatrix out(V.front().rows(), static_cast<Eigen::Index>(C.size()));
    for (size_t i = 0; i < C.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = w[static_cast<Eigen::Index>(i)] * V[C[i]].col(k);
    out /= out.norm();
    return out;
}

/// Local LMMSE with per-slot cluster combining.
inline ReceiveVectorSet lmmse_combining(const ClusterGraph& g, const ChannelEstimateSet& est,
                                        const std::vector<double>& sigma2, double snr) {
    const auto V = local_lmmse(g, est, sigma2, snr);
    ReceiveVectorSet out;
    out.blocks.resize(g.num_ues);
    for (int k = 0; k < g.num_ues; ++k) {
        if (g.in_outage(k)) continue;
        const CombiningStats s = combining_stats(g, V, est, sigma2, k);
        out.blocks[k] = assemble_cluster_vector(g, V, optimal_combining_weights(s, snr), k);
    }
    return out;
}

/// Running averages of a, G G^H and D over a window of realizations.
class LsfdAccumulator {
public:
    explicit LsfdAccumulator(const ClusterGraph& g) : g_(&g), sums_(g.num_ues) {}

    void add(const ChannelEstimateSet& est, const std::vector<double>& sigma2, double snr) {
        const auto V = local_lmmse(*g_, est, sigma2, snr);
        for (int k = 0; k < g_->num_ues; ++k) {
            if (g_->in_outage(k)) continue;
            CombiningStats s = combining_stats(*g_, V, est, sigma2, k);
            if (count_ == 0) {
                sums_[k] = std::move(s);
            } else {
                sums_[k].a += s.a;
                sums_[k].GGh += s.GGh;
                sums_[k].d += s.d;
            }
        }
        ++count_;
    }

    int count() const { return count_; }

    /// w_k = (D + SNR E[G G^H])^{-1} E[a], one vector per UE.
    std::vector<CVector> weights(double snr) const {
        std::vector<CVector> w(g_->num_ues);
        for (int k = 0; k < g_->num_ues; ++k) {
            if (g_->in_outage(k) || count_ == 0) continue;
            CombiningStats mean{sums_[k].a / count_, sums_[k].GGh / count_, sums_[k].d / count_};
            w[k] = optimal_combining_weights(mean, snr);
        }
        return w;
    }

private:
    const ClusterGraph* g_;
    std::vector<CombiningStats> sums_;
    int count_ = 0;
};

/// Local LMMSE combined with fixed LSFD weights.
inline ReceiveVectorSet lsfd_combining(const ClusterGraph& g, const ChannelEstimateSet& est,
                                       const std::vector<double>& sigma2, double snr,
                                       const std::vector<CVector>& weights) {
    const auto V = local_lmmse(g, est, sigma2, snr);
    ReceiveVectorSet out;
    out.blocks.resize(g.num_ues);
    for (int k = 0; k < g.num_ues; ++k) {
        if (g.in_outage(k)) continue;
        out.blocks[k] = assemble_cluster_vector(g, V, weights[k], k);
    }
    return out;
}

/// Per-RU precoders (unit-norm columns, M x K, zero for unserved UEs) and PPA powers q_{l,k}.
struct LocalPrecoding {
    std::vector<CMatrix> u;
    RMatrix q;  ///< L x K
};

namespace detail {

/// Greedy pick in decreasing beta of UEs whose channel keeps a component of relative size
/// sqrt(1 - c^2) outside the span of those already picked, at most `limit` of them.
inline std::vector<int> select_independent(const std::vector<int>& candidates, const CMatrix& H, int limit,
                                           double collinearity) {
    const double min_ratio = std::sqrt(std::max(0.0, 1.0 - collinearity * collinearity));
    std::vector<int> picked;
    CMatrix Q(H.rows(), 0);
    for (int k : candidates) {
        if (static_cast<int>(picked.size()) >= limit) break;
        const CVector h = H.col(k);
        const double n = h.norm();
        if (n == 0.0) continue;
        CVector r = h - Q * (Q.adjoint() * h);
        r -= Q * (Q.adjoint() * r);
        if (r.norm() < min_ratio * n) continue;
        Q.conservativeResize(Eigen::NoChange, Q.cols() + 1);
        Q.col(Q.cols() - 1) = r / r.norm();
        picked.push_back(k);
    }
    return picked;
}

/// Unit-norm columns of H_s (H_s^H H_s)^{-1}.
inline CMatrix zf_directions(const CMatrix& Hs) {
    CMatrix U = Hs * (Hs.adjoint() * Hs).ldlt().solve(CMatrix::Identity(Hs.cols(), Hs.cols()));
    for (Eigen::Index c = 0; c < U.cols(); ++c) U.col(c) /= U.col(c).norm();
    return U;
}

inline std::vector<int> by_decreasing_beta(const std::vector<int>& users, const NetworkTopology& topo, int l) {
    std::vector<int> s = users;
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) { return topo.beta(l, a) > topo.beta(l, b); });
    return s;
}

inline void apply_ppa(LocalPrecoding& p, const NetworkTopology& topo, int l, const std::vector<int>& served,
                      double p_ru) {
    double total = 0.0;
    for (int k : served) total += topo.beta(l, k);
    for (int k : served) p.q(l, k) = p_ru * topo.beta(l, k) / total;
}

}  // namespace detail

/// Local ZF with UE selection; powers split proportionally to beta over the served UEs, P_RU = K/L.
inline LocalPrecoding lzf_precoder(const ClusterGraph& g, const ChannelEstimateSet& est, const NetworkTopology& topo,
                                   double collinearity) {
    const Eigen::Index M = est.h.front().rows();
    LocalPrecoding p;
    p.u.assign(g.num_rus, CMatrix::Zero(M, g.num_ues));
    p.q = RMatrix::Zero(g.num_rus, g.num_ues);
    const double p_ru = static_cast<double>(g.num_ues) / g.num_rus;
    for (int l = 0; l < g.num_rus; ++l) {
        if (g.users[l].empty()) continue;
        const auto order = detail::by_decreasing_beta(g.users[l], topo, l);
        const auto sel = detail::select_independent(order, est.h[l], static_cast<int>(M), collinearity);
        if (sel.empty()) continue;
        CMatrix Hs(M, static_cast<Eigen::Index>(sel.size()));
        for (size_t i = 0; i < sel.size(); ++i) Hs.col(static_cast<Eigen::Index>(i)) = est.h[l].col(sel[i]);
        const CMatrix U = detail::zf_directions(Hs);
        for (size_t i = 0; i < sel.size(); ++i) p.u[l].col(sel[i]) = U.col(static_cast<Eigen::Index>(i));
        detail::apply_ppa(p, topo, l, sel, p_ru);
    }
    return p;
}

/// Local partial ZF: UEs within `margin_db` of the strongest LSFC at the RU, linearly independent and at
/// most M of them, get ZF directions among themselves; every other served UE gets maximum-ratio.
inline LocalPrecoding lpzf_precoder(const ClusterGraph& g, const ChannelEstimateSet& est, const NetworkTopology& topo,
                                    double collinearity, double margin_db) {
    const Eigen::Index M = est.h.front().rows();
    LocalPrecoding p;
    p.u.assign(g.num_rus, CMatrix::Zero(M, g.num_ues));
    p.q = RMatrix::Zero(g.num_rus, g.num_ues);
    const double p_ru = static_cast<double>(g.num_ues) / g.num_rus;
    const double margin = std::pow(10.0, -margin_db / 10.0);
    for (int l = 0; l < g.num_rus; ++l) {
        if (g.users[l].empty()) continue;
        const auto order = detail::by_decreasing_beta(g.users[l], topo, l);
        const double floor_beta = topo.beta(l, order.front()) * margin;
        std::vector<int> candidates;
        for (int k : order) {
            if (topo.beta(l, k) >= floor_beta) candidates.push_back(k);
        }
        const auto strong = detail::select_independent(candidates, est.h[l], static_cast<int>(M), collinearity);
        if (!strong.empty()) {
            CMatrix Hs(M, static_cast<Eigen::Index>(strong.size()));
            for (size_t i = 0; i < strong.size(); ++i) Hs.col(static_cast<Eigen::Index>(i)) = est.h[l].col(strong[i]);
            const CMatrix U = detail::zf_directions(Hs);
            for (size_t i = 0; i < strong.size(); ++i) p.u[l].col(strong[i]) = U.col(static_cast<Eigen::Index>(i));
        }
        std::vector<int> served;
        for (int k : order) {
            const bool is_strong = std::find(strong.begin(), strong.end(), k) != strong.end();
            if (!is_strong) {
                const double n = est.h[l].col(k).norm();
                if (n == 0.0) continue;
                p.u[l].col(k) = est.h[l].col(k) / n;
            }
            served.push_back(k);
        }
        detail::apply_ppa(p, topo, l, served, p_ru);
    }
    return p;
}

}  // namespace cfsim
