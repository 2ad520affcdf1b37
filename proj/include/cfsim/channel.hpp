#pragma once

#include <cmath>
#include <vector>

#include "cfsim/rng.hpp"
#include "cfsim/topology.hpp"
#include "cfsim/types.hpp"

namespace cfsim {

/// Unitary DFT matrix with [F]_{m,n} = exp(-j 2 pi m n / M) / sqrt(M).
class DftBasis {
public:
    explicit DftBasis(int M) : F_(M, M) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(M));
        for (int m = 0; m < M; ++m) {
            for (int n = 0; n < M; ++n) {
                // Reduce the exponent mod M first so large products keep full precision.
                const long e = (static_cast<long>(m) * n) % M;
                const double phase = -2.0 * kPi * static_cast<double>(e) / M;
                F_(m, n) = std::polar(scale, phase);
            }
        }
    }

    int size() const { return static_cast<int>(F_.rows()); }
    const CMatrix& matrix() const { return F_; }
    auto column(int i) const { return F_.col(i); }

    CMatrix columns(const IndexSet& idx) const {
        CMatrix out(F_.rows(), static_cast<Eigen::Index>(idx.size()));
        for (size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = F_.col(idx[i]);
        return out;
    }

private:
    CMatrix F_;
};

/// Sigma = (beta M / |S|) F_S F_S^H.
inline CMatrix covariance(double beta, const IndexSet& support, const DftBasis& F) {
    const CMatrix Fs = F.columns(support);
    const double scale = beta * F.size() / static_cast<double>(support.size());
    return scale * Fs * Fs.adjoint();
}

/// One block-fading draw. h[l] is M x K; column k is h_{l,k}.
struct ChannelRealization {
    std::vector<CMatrix> h;
    int slot = 0;

    int num_rus() const { return static_cast<int>(h.size()); }
    auto block(int l, int k) const { return h[l].col(k); }
};

/// Draws h_{l,k} = sqrt(beta M / |S|) F_S nu for one pair.
inline CVector sample_pair(const NetworkTopology& topo, const DftBasis& F, int l, int k, RandomStream& rng) {
    const IndexSet& S = topo.support_of(l, k);
    const double amp = std::sqrt(topo.beta(l, k) * topo.antennas / static_cast<double>(S.size()));
    CVector h = CVector::Zero(topo.antennas);
    for (int idx : S) h += (amp * rng.complex_gaussian()) * F.column(idx);
    return h;
}

/// Draws every RU-UE block. Blocks for UEs with `active[k] == false` are left at zero when a mask is given.
inline ChannelRealization sample_channel(const NetworkTopology& topo, const DftBasis& F, RandomStream& rng,
                                         const std::vector<char>* active = nullptr, int slot = 0) {
    ChannelRealization r;
    r.slot = slot;
    r.h.assign(topo.num_rus, CMatrix::Zero(topo.antennas, topo.num_ues));
    for (int l = 0; l < topo.num_rus; ++l) {
        for (int k = 0; k < topo.num_ues; ++k) {
            if (active && !(*active)[k]) continue;
            r.h[l].col(k) = sample_pair(topo, F, l, k, rng);
        }
    }
    return r;
}

/// Orthogonal projector F_S F_S^H.
inline CMatrix support_projector(const IndexSet& support, const DftBasis& F) {
    const CMatrix Fs = F.columns(support);
    return Fs * Fs.adjoint();
}

}  // namespace cfsim
