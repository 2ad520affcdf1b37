#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsim/channel.hpp"
#include "cfsim/cluster.hpp"
#include "cfsim/config.hpp"
#include "cfsim/rng.hpp"
#include "cfsim/topology.hpp"

namespace cfsim {

inline int mod_pos(long a, int n) {
    long r = a % n;
    return static_cast<int>(r < 0 ? r + n : r);
}

/// Multiplicative inverse modulo a prime.
inline int mod_inverse(int a, int p) {
    long result = 1;
    long base = mod_pos(a, p);
    int e = p - 2;
    while (e > 0) {
        if (e & 1) result = result * base % p;
        base = base * base % p;
        e >>= 1;
    }
    return static_cast<int>(result);
}

/// The N-1 mutually orthogonal latin squares A_a(f, s) = ((a (f-1) + (s-1)) mod N) + 1, all indices 1-based.
class LatinSquareFamily {
public:
    explicit LatinSquareFamily(int N) : N_(N) {
        if (!is_prime(N)) throw std::invalid_argument("latin square order must be prime");
    }

    int order() const { return N_; }
    int num_squares() const { return N_ - 1; }

    int symbol(int a, int f, int s) const { return mod_pos(static_cast<long>(a) * (f - 1) + (s - 1), N_) + 1; }

    /// Row f (1-based subcarrier) carrying symbol n of square a in slot s (1-based, taken mod N).
    int subcarrier(int a, int n, int s) const {
        const int slot = mod_pos(s - 1, N_);
        return mod_pos(static_cast<long>(mod_inverse(a, N_)) * mod_pos(n - 1 - slot, N_), N_) + 1;
    }

    std::vector<std::vector<int>> square(int a) const {
        std::vector<std::vector<int>> A(N_, std::vector<int>(N_));
        for (int f = 1; f <= N_; ++f) {
            for (int s = 1; s <= N_; ++s) A[f - 1][s - 1] = symbol(a, f, s);
        }
        return A;
    }

private:
    int N_;
};

/// Flat-top hexagonal cells with centres inside the square, nearest-centre membership under the torus metric.
class HexGrid {
public:
    HexGrid(double side, double radius) : side_(side), radius_(radius) {
        const double dx = 1.5 * radius;
        const double dy = std::sqrt(3.0) * radius;
        const int qmax = static_cast<int>(std::ceil(side / dx));
        for (int q = 0; q < qmax; ++q) {
            const double x = q * dx;
            const double offset = (q % 2 == 0) ? 0.0 : 0.5 * dy;
            for (int r = -1; r * dy + offset < side; ++r) {
                const double y = r * dy + offset;
                if (x >= 0.0 && x < side && y >= 0.0 && y < side) centres_.push_back({x, y});
            }
        }
    }

    int num_cells() const { return static_cast<int>(centres_.size()); }
    const std::vector<Point>& centres() const { return centres_; }
    double radius() const { return radius_; }

    int cell_of(Point p) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < num_cells(); ++c) {
            const double d = torus_distance(p, centres_[c], side_);
            if (d < best_d - 1e-9) {
                best_d = d;
                best = c;
            }
        }
        return best;
    }

    double centre_distance(int a, int b) const { return torus_distance(centres_[a], centres_[b], side_); }

    /// Neighbouring centres of a regular flat-top grid sit sqrt(3) R apart; the slack absorbs wrap seams.
    bool adjacent(int a, int b) const { return a != b && centre_distance(a, b) < 1.25 * std::sqrt(3.0) * radius_; }

private:
    double side_;
    double radius_;
    std::vector<Point> centres_;
};

struct HoppingAssignment {
    int order = 0;
    std::vector<int> cell_of_ue;
    std::vector<int> square_of_cell;  ///< 1-based square index per cell
    std::vector<int> square;          ///< a_k
    std::vector<int> symbol;          ///< n_k, 1-based
    std::vector<std::string> warnings;

    /// 1-based subcarrier of UE k in (0-based) slot s.
    int subcarrier(const LatinSquareFamily& fam, int k, int s) const { return fam.subcarrier(square[k], symbol[k], s + 1); }

    nlohmann::json to_json() const {
        nlohmann::json ues = nlohmann::json::array();
        for (size_t k = 0; k < square.size(); ++k) {
            ues.push_back({{"ue", k}, {"cell", cell_of_ue[k]}, {"square", square[k]}, {"symbol", symbol[k]}});
        }
        return {{"order", order}, {"ues", ues}, {"warnings", warnings}};
    }
};

/// Greedy colouring: each cell takes the square maximising the minimum torus distance to cells already
/// holding it, never a square held by an adjacent cell when the palette allows. UEs of a cell take
/// symbols 1, 2, ... in index order.
inline HoppingAssignment assign_hopping(const NetworkTopology& topo, const LatinSquareFamily& fam, const HexGrid& grid) {
    HoppingAssignment h;
    h.order = fam.order();
    const int C = grid.num_cells();
    const int P = fam.num_squares();
    h.square_of_cell.assign(C, 0);
    std::vector<std::vector<int>> holders(P + 1);
    for (int c = 0; c < C; ++c) {
        int best = -1;
        double best_score = -1.0;
        bool best_clash = true;
        for (int a = 1; a <= P; ++a) {
            double score = std::numeric_limits<double>::infinity();
            bool clash = false;
            for (int other : holders[a]) {
                score = std::min(score, grid.centre_distance(c, other));
                clash = clash || grid.adjacent(c, other);
            }
            const bool better = (best_clash && !clash) || (clash == best_clash && score > best_score + 1e-9);
            if (best < 0 || better) {
                best = a;
                best_score = score;
                best_clash = clash;
            }
        }
        if (best_clash) h.warnings.push_back("cell " + std::to_string(c) + " shares a latin square with a neighbour");
        h.square_of_cell[c] = best;
        holders[best].push_back(c);
    }

    const int K = topo.num_ues;
    h.cell_of_ue.resize(K);
    h.square.resize(K);
    h.symbol.resize(K);
    std::vector<int> next_symbol(C, 0);
    for (int k = 0; k < K; ++k) {
        const int c = grid.cell_of(topo.ue_positions[k]);
        h.cell_of_ue[k] = c;
        h.square[k] = h.square_of_cell[c];
        const int n = next_symbol[c]++;
        if (n == fam.order()) {
            h.warnings.push_back("cell " + std::to_string(c) + " holds more UEs than sequence symbols; reusing");
        }
        h.symbol[k] = n % fam.order() + 1;
    }
    return h;
}

inline HoppingAssignment assign_hopping(const NetworkTopology& topo, const LatinSquareFamily& fam, const SimConfig& cfg) {
    return assign_hopping(topo, fam, HexGrid(cfg.area_side_m, cfg.effective_hex_radius_m()));
}

/// Closed-form number of slots in [0, S) where UEs k and j share a subcarrier.
inline int predicted_collisions(const HoppingAssignment& h, int k, int j, int S) {
    const int N = h.order;
    const int a = h.square[k];
    const int b = h.square[j];
    const int n = h.symbol[k] - 1;
    const int m = h.symbol[j] - 1;
    if (a == b) return n == m ? S : 0;
    const int f0 = mod_pos(static_cast<long>(n - m) * mod_inverse(mod_pos(a - b, N), N), N);
    const int s0 = mod_pos(n - static_cast<long>(a) * f0, N);
    if (s0 >= S) return 0;
    return (S - 1 - s0) / N + 1;
}

/// SRS observations Y_{l,k} (M x S) for every k in U_l, built from fresh per-slot channel draws.
/// Column s sums the channels of all active UEs on k's subcarrier plus CN(0, 1/SNR) noise; the noise
/// sample is shared by the UEs of U_l hopping onto the same subcarrier.
inline std::vector<CMatrix> generate_srs_for_ru(int l, const HoppingAssignment& h, const LatinSquareFamily& fam,
                                                const NetworkTopology& topo, const ClusterGraph& g,
                                                const DftBasis& F, int S, RandomStream& rng,
                                                bool with_noise = true) {
    const int M = topo.antennas;
    const int N = fam.order();
    const std::vector<int>& served = g.users[l];
    std::vector<CMatrix> Y(served.size(), CMatrix(M, S));
    CMatrix sums(M, N);
    std::vector<char> needed(N);
    std::vector<double> amp(topo.num_ues);
    for (int i = 0; i < topo.num_ues; ++i) {
        amp[i] = std::sqrt(topo.beta(l, i) * M / static_cast<double>(topo.support_of(l, i).size()));
    }
    const double noise_std = std::sqrt(1.0 / topo.snr);
    for (int s = 0; s < S; ++s) {
        sums.setZero();
        std::fill(needed.begin(), needed.end(), 0);
        for (int k : served) needed[h.subcarrier(fam, k, s) - 1] = 1;
        for (int i = 0; i < topo.num_ues; ++i) {
            if (g.in_outage(i)) continue;
            const int f = h.subcarrier(fam, i, s) - 1;
            for (int idx : topo.support_of(l, i)) {
                // Draw for every UE to keep the stream layout independent of which subcarriers are observed.
                const Complex nu = rng.complex_gaussian();
                if (needed[f]) sums.col(f) += (amp[i] * nu) * F.column(idx);
            }
        }
        if (with_noise) {
            for (int f = 0; f < N; ++f) {
                if (!needed[f]) continue;
                for (int m = 0; m < M; ++m) sums(m, f) += noise_std * rng.complex_gaussian();
            }
        }
        for (size_t c = 0; c < served.size(); ++c) Y[c].col(s) = sums.col(h.subcarrier(fam, served[c], s) - 1);
    }
    return Y;
}

}  // namespace cfsim
