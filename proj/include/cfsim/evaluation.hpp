#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfsim/duality_power.hpp"
#include "cfsim/receivers.hpp"
#include "cfsim/rng.hpp"

namespace cfsim {

/// |g_kk|^2 / (1/SNR + sum_{j != k, active} |g_kj|^2) with g = coupling over the true channels.
inline double ul_sinr(const CMatrix& G, const std::vector<char>& active, double snr, int k) {
    double den = 1.0 / snr;
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
        if (j != k && active[j]) den += std::norm(G(k, j));
    }
    return std::norm(G(k, k)) / den;
}

/// |h_k^H u_k|^2 q_k / (1/SNR + sum_{j != k} |h_k^H u_j|^2 q_j) with u = v, so h_k^H u_j = conj(g_jk).
inline double dl_sinr(const CMatrix& G, const RVector& q, const std::vector<char>& active, double snr, int k) {
    double den = 1.0 / snr;
    for (Eigen::Index j = 0; j < G.rows(); ++j) {
        if (j != k && active[j]) den += std::norm(G(j, k)) * q[j];
    }
    return std::norm(G(k, k)) * q[k] / den;
}

/// Per-UE DL SINR with per-RU precoders and powers (non-coherent sum across RUs).
inline std::vector<double> dl_dist_sinr(const ClusterGraph& g, const LocalPrecoding& p, const ChannelRealization& r,
                                        double snr) {
    const int K = g.num_ues;
    std::vector<double> signal(K, 0.0);
    std::vector<double> interference(K, 1.0 / snr);
    for (int l = 0; l < g.num_rus; ++l) {
        for (int j : g.users[l]) {
            const double qj = p.q(l, j);
            if (qj <= 0.0) continue;
            // |h_{l,k}^H u_{l,j}|^2 for every k.
            const RVector c = (r.h[l].adjoint() * p.u[l].col(j)).cwiseAbs2();
            for (int k = 0; k < K; ++k) {
                if (g.in_outage(k)) continue;
                if (k == j) {
                    signal[k] += c[k] * qj;
                } else {
                    interference[k] += c[k] * qj;
                }
            }
        }
    }
    std::vector<double> out(K, 0.0);
    for (int k = 0; k < K; ++k) out[k] = signal[k] / interference[k];
    return out;
}

inline double log2p1(double sinr) { return std::log2(1.0 + sinr); }

/// Sample mean of log2(1 + SINR).
class RateAccumulator {
public:
    void add(double sinr) {
        const double r = log2p1(sinr);
        sum_ += r;
        sum_sq_ += r * r;
        ++n_;
    }
    int count() const { return n_; }
    double mean() const { return n_ ? sum_ / n_ : 0.0; }
    double std_error() const {
        if (n_ < 2) return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, (sum_sq_ / n_ - m * m) / (n_ - 1)));
    }

private:
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    int n_ = 0;
};

inline double optimistic_ergodic_rate(const std::vector<double>& sinr) {
    RateAccumulator acc;
    for (double s : sinr) acc.add(s);
    return acc.mean();
}

/// Moments of g_kk and the mean interference power sum_{j != k} E|g_kj|^2.
struct GainStatistics {
    Complex mean{0.0, 0.0};
    double variance = 0.0;
    double interference = 0.0;
};

inline GainStatistics gain_statistics(const std::vector<Complex>& gkk, const std::vector<double>& interference) {
    if (gkk.empty()) throw std::invalid_argument("gain_statistics: no samples");
    GainStatistics s;
    for (const Complex& g : gkk) s.mean += g;
    s.mean /= static_cast<double>(gkk.size());
    for (const Complex& g : gkk) s.variance += std::norm(g - s.mean);
    s.variance /= static_cast<double>(gkk.size());
    for (double i : interference) s.interference += i;
    s.interference /= static_cast<double>(interference.size());
    return s;
}

/// log2(1 + |E g|^2 / (1/SNR + Var g + sum E|g_kj|^2)).
inline double uatf_rate(const GainStatistics& s, double snr) {
    return log2p1(std::norm(s.mean) / (1.0 / snr + s.variance + s.interference));
}

/// Conditional UatF bound given one dedicated in-slot pilot of energy `pilot_energy`.
inline double cuatf_rate(const std::vector<Complex>& gkk, const GainStatistics& s, double snr, int T,
                         double pilot_energy, RandomStream& rng) {
    if (!(pilot_energy > 0.0 && pilot_energy < T)) throw std::invalid_argument("cuatf_rate: pilot energy outside (0, T)");
    const double es = (T - pilot_energy) / (T - 1.0);
    const double var_w = 1.0 / snr + s.interference;
    const double sq = std::sqrt(pilot_energy);
    const double denom = s.variance * pilot_energy + var_w;
    const double gain = s.variance * sq / denom;
    const double mmse = var_w * s.variance / denom;
    const double noise_std = std::sqrt(var_w);
    double acc = 0.0;
    for (const Complex& g : gkk) {
        const Complex yp = g * sq + noise_std * rng.complex_gaussian();
        const Complex ghat = s.mean + gain * (yp - s.mean * sq);
        acc += log2p1(std::norm(ghat) * es / (1.0 / snr + mmse * es + s.interference));
    }
    return (T - 1.0) / T * acc / static_cast<double>(gkk.size());
}

inline double spectral_efficiency(double rate, int pilot_dim, int slot_dim) {
    return (1.0 - static_cast<double>(pilot_dim) / slot_dim) * rate;
}

/// One CSV row.
struct UeRate {
    int ue = 0;
    std::string scheme;
    std::string csi_mode;
    double r_ul = 0.0;
    double r_dl = 0.0;
    double r_ul_stderr = 0.0;            ///< Monte Carlo standard error of r_ul
    double se_ul = 0.0;
    double se_dl = 0.0;
    double r_uatf = 0.0;
    double r_cuatf = 0.0;                ///< best value over the pilot-energy sweep
    std::vector<double> r_cuatf_sweep;   ///< one per configured pilot energy
    bool outage = false;
};

}  // namespace cfsim
