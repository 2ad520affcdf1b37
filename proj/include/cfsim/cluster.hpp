#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "cfsim/channel.hpp"
#include "cfsim/config.hpp"
#include "cfsim/rng.hpp"
#include "cfsim/topology.hpp"

namespace cfsim {

inline constexpr int kOutage = -1;

/// Bipartite UE-RU association with DMRS pilot indices (0-based, kOutage when unserved).
struct ClusterGraph {
    int num_rus = 0;
    int num_ues = 0;
    int pilot_dim = 0;
    std::vector<std::vector<int>> serving;  ///< C[k], leader first, then decreasing beta
    std::vector<std::vector<int>> users;    ///< U[l], ascending UE index
    std::vector<int> pilot;                 ///< t[k]
    std::vector<int> arrival_order;
    std::vector<char> edge;                 ///< L*K membership flags

    bool has_edge(int l, int k) const { return edge[static_cast<size_t>(l) * num_ues + k] != 0; }
    bool in_outage(int k) const { return pilot[k] == kOutage; }

    std::vector<char> active_mask() const {
        std::vector<char> m(num_ues);
        for (int k = 0; k < num_ues; ++k) m[k] = in_outage(k) ? 0 : 1;
        return m;
    }

    int num_active() const {
        int n = 0;
        for (int k = 0; k < num_ues; ++k) n += in_outage(k) ? 0 : 1;
        return n;
    }

    size_t num_edges() const {
        return static_cast<size_t>(std::count(edge.begin(), edge.end(), char{1}));
    }

    /// U(C_k): every UE served by at least one RU of C_k, ascending.
    std::vector<int> cluster_users(int k) const {
        std::vector<char> seen(num_ues, 0);
        for (int l : serving[k]) {
            for (int j : users[l]) seen[j] = 1;
        }
        std::vector<int> out;
        for (int j = 0; j < num_ues; ++j) {
            if (seen[j]) out.push_back(j);
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json edges = nlohmann::json::array();
        for (int k = 0; k < num_ues; ++k) {
            for (int l : serving[k]) edges.push_back({{"ru", l}, {"ue", k}});
        }
        nlohmann::json outage = nlohmann::json::array();
        for (int k = 0; k < num_ues; ++k) {
            if (in_outage(k)) outage.push_back(k);
        }
        return {{"num_rus", num_rus}, {"num_ues", num_ues}, {"pilot", pilot}, {"edges", edges}, {"outage", outage}};
    }
};

/// Greedy user-centric association for a given arrival order.
inline ClusterGraph form_clusters(const NetworkTopology& topo, const SimConfig& cfg, std::vector<int> order) {
    const int L = topo.num_rus;
    const int K = topo.num_ues;
    const int tau = cfg.pilot_dim;
    const double threshold = cfg.snr_threshold / (topo.antennas * topo.snr);

    ClusterGraph g;
    g.num_rus = L;
    g.num_ues = K;
    g.pilot_dim = tau;
    g.serving.assign(K, {});
    g.users.assign(L, {});
    g.pilot.assign(K, kOutage);
    g.edge.assign(static_cast<size_t>(L) * K, 0);
    g.arrival_order = order;

    // pilot_used[l][t]: pilot t already taken at RU l.
    std::vector<std::vector<char>> pilot_used(L, std::vector<char>(tau, 0));
    std::vector<int> load(L, 0);

    std::vector<int> rus(L);
    for (int k : order) {
        std::iota(rus.begin(), rus.end(), 0);
        std::stable_sort(rus.begin(), rus.end(), [&](int a, int b) { return topo.beta(a, k) > topo.beta(b, k); });

        int leader = -1;
        for (int l : rus) {
            if (topo.beta(l, k) < threshold) break;
            if (load[l] < tau) {
                leader = l;
                break;
            }
        }
        if (leader < 0) continue;

        int t = 0;
        while (pilot_used[leader][t]) ++t;
        g.pilot[k] = t;

        auto attach = [&](int l) {
            g.serving[k].push_back(l);
            g.users[l].push_back(k);
            g.edge[static_cast<size_t>(l) * K + k] = 1;
            pilot_used[l][t] = 1;
            ++load[l];
        };
        attach(leader);
        for (int l : rus) {
            if (static_cast<int>(g.serving[k].size()) >= cfg.max_cluster_size) break;
            if (l == leader) continue;
            if (topo.beta(l, k) < threshold) break;
            if (!pilot_used[l][t]) attach(l);
        }
    }
    for (auto& u : g.users) std::sort(u.begin(), u.end());
    return g;
}

/// Arrival order is a uniformly random permutation.
inline ClusterGraph form_clusters(const NetworkTopology& topo, const SimConfig& cfg, RandomStream& rng) {
    std::vector<int> order(topo.num_ues);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    return form_clusters(topo, cfg, std::move(order));
}

/// Reduced channel matrix H(C_k): rows are the M-blocks of RUs in C_k (in `serving` order), columns are
/// the UEs of U(C_k); blocks with (l, j) outside the edge set are zero.
struct PartialChannelView {
    std::vector<int> rus;
    std::vector<int> ues;
    CMatrix H;

    int column_of(int j) const {
        auto it = std::find(ues.begin(), ues.end(), j);
        return it == ues.end() ? -1 : static_cast<int>(it - ues.begin());
    }
};

/// `blocks[l]` is M x K; only entries on edges are read.
inline PartialChannelView partial_channel_view(const ClusterGraph& g, const std::vector<CMatrix>& blocks, int k) {
    if (g.in_outage(k)) throw std::invalid_argument("partial_channel_view: UE is in outage");
    PartialChannelView v;
    v.rus = g.serving[k];
    v.ues = g.cluster_users(k);
    const int M = static_cast<int>(blocks.front().rows());
    v.H = CMatrix::Zero(M * static_cast<Eigen::Index>(v.rus.size()), static_cast<Eigen::Index>(v.ues.size()));
    for (size_t r = 0; r < v.rus.size(); ++r) {
        const int l = v.rus[r];
        for (size_t c = 0; c < v.ues.size(); ++c) {
            const int j = v.ues[c];
            if (g.has_edge(l, j)) v.H.block(static_cast<Eigen::Index>(r) * M, static_cast<Eigen::Index>(c), M, 1) = blocks[l].col(j);
        }
    }
    return v;
}

}  // namespace cfsim
