#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfsim/config.hpp"
#include "cfsim/rng.hpp"
#include "cfsim/types.hpp"

namespace cfsim {

// 3GPP TR 38.901 UMi street canyon pathloss (Table 7.4.1-1) and LOS probability (Table 7.4.2-1).
struct PathlossModel {
    double carrier_freq_ghz = 3.7;
    double ru_height_m = 10.0;
    double ue_height_m = 2.0;
    double environment_height_m = 1.0;
    double min_distance_m = 10.0;
    double shadowing_los_db = 4.0;
    double shadowing_nlos_db = 7.82;

    static PathlossModel from_config(const SimConfig& cfg) {
        PathlossModel m;
        m.carrier_freq_ghz = cfg.carrier_freq_ghz;
        m.ru_height_m = cfg.ru_height_m;
        m.ue_height_m = cfg.ue_height_m;
        m.min_distance_m = cfg.min_distance_m;
        m.shadowing_los_db = cfg.shadowing_los_db;
        m.shadowing_nlos_db = cfg.shadowing_nlos_db;
        return m;
    }

    /// Effective breakpoint distance d'_BP in metres.
    double breakpoint_m() const {
        constexpr double kSpeedOfLight = 3.0e8;
        return 4.0 * (ru_height_m - environment_height_m) * (ue_height_m - environment_height_m) *
               carrier_freq_ghz * 1e9 / kSpeedOfLight;
    }
};

inline double los_pathloss_db(double d2d_m, const PathlossModel& m) {
    const double dh = m.ru_height_m - m.ue_height_m;
    const double d3d = std::hypot(d2d_m, dh);
    const double fc = m.carrier_freq_ghz;
    const double dbp = m.breakpoint_m();
    if (d2d_m <= dbp) return 32.4 + 21.0 * std::log10(d3d) + 20.0 * std::log10(fc);
    return 32.4 + 40.0 * std::log10(d3d) + 20.0 * std::log10(fc) - 9.5 * std::log10(dbp * dbp + dh * dh);
}

/// Deterministic pathloss in dB; distances below the floor are clamped.
inline double pathloss_db(double d2d_m, bool los, const PathlossModel& m) {
    const double d = std::max(d2d_m, m.min_distance_m);
    const double pl_los = los_pathloss_db(d, m);
    if (los) return pl_los;
    const double d3d = std::hypot(d, m.ru_height_m - m.ue_height_m);
    const double pl_nlos = 35.3 * std::log10(d3d) + 22.4 + 21.3 * std::log10(m.carrier_freq_ghz) -
                           0.3 * (m.ue_height_m - 1.5);
    return std::max(pl_los, pl_nlos);
}

inline double los_probability(double d2d_m) {
    if (d2d_m <= 18.0) return 1.0;
    return 18.0 / d2d_m + std::exp(-d2d_m / 36.0) * (1.0 - 18.0 / d2d_m);
}

struct PowerCalibration {
    double reference_distance_m = 0.0;
    /// LOS-probability weighted pathloss gain at the reference distance, in dB (negative).
    double mean_gain_db = 0.0;
    /// Linear P_ue / N0.
    double snr = 0.0;
    double ue_tx_power_dbm = 0.0;
};

inline double snr_from_tx_power(double tx_power_dbm, const SimConfig& cfg) {
    const double noise_dbm = cfg.noise_psd_dbm_hz + 10.0 * std::log10(cfg.bandwidth_hz);
    return std::pow(10.0, (tx_power_dbm - noise_dbm) / 10.0);
}

/// Chooses SNR so that mean_gain * M * SNR = 1 at calibration_distance_factor * d_L.
/// The mean is taken over LOS/NLOS in the dB domain, without shadowing.
inline PowerCalibration calibrate_ue_power(const SimConfig& cfg) {
    const PathlossModel model = PathlossModel::from_config(cfg);
    PowerCalibration out;
    out.reference_distance_m = cfg.calibration_distance_factor * cfg.equal_area_radius_m();
    const double p = los_probability(out.reference_distance_m);
    const double pl = p * pathloss_db(out.reference_distance_m, true, model) +
                      (1.0 - p) * pathloss_db(out.reference_distance_m, false, model);
    out.mean_gain_db = -pl;
    const double noise_dbm = cfg.noise_psd_dbm_hz + 10.0 * std::log10(cfg.bandwidth_hz);
    if (std::isnan(cfg.ue_tx_power_dbm)) {
        const double snr_db = -out.mean_gain_db - 10.0 * std::log10(cfg.antennas_per_ru);
        out.snr = std::pow(10.0, snr_db / 10.0);
        out.ue_tx_power_dbm = snr_db + noise_dbm;
    } else {
        out.ue_tx_power_dbm = cfg.ue_tx_power_dbm;
        out.snr = snr_from_tx_power(cfg.ue_tx_power_dbm, cfg);
    }
    return out;
}

/// Shortest displacement from `a` to `b` on a square torus of the given side.
inline Point torus_displacement(Point a, Point b, double side) {
    auto wrap = [side](double d) {
        d = std::fmod(d, side);
        if (d > side / 2.0) d -= side;
        if (d < -side / 2.0) d += side;
        return d;
    };
    return {wrap(b.x - a.x), wrap(b.y - a.y)};
}

inline double torus_distance(Point a, Point b, double side) {
    const Point d = torus_displacement(a, b, side);
    return std::hypot(d.x, d.y);
}

/// DFT indices whose grid angles 2*pi*m/M fall in the half-open window [theta - delta/2, theta + delta/2).
/// The set always has max(1, floor(delta*M/(2*pi))) consecutive entries (mod M); when the window is
/// narrower than one grid step the nearest index is returned.
inline IndexSet angular_support(double theta, double delta, int M) {
    const double width = delta * M / (2.0 * kPi);
    const int count = std::clamp(static_cast<int>(std::floor(width + 1e-9)), 1, M);
    double start = theta * M / (2.0 * kPi) - 0.5 * count;
    const double nearest = std::round(start);
    if (std::abs(start - nearest) < 1e-9) start = nearest;
    const long first = static_cast<long>(std::ceil(start));
    IndexSet out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        long m = (first + i) % M;
        if (m < 0) m += M;
        out.push_back(static_cast<int>(m));
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Long-term geometry: positions, LSFCs, LOS state and angular supports of every RU-UE pair.
struct NetworkTopology {
    int num_rus = 0;
    int num_ues = 0;
    int antennas = 0;
    std::vector<Point> ru_positions;
    std::vector<Point> ue_positions;
    RMatrix beta;                  ///< L x K linear gains
    std::vector<char> los;         ///< L*K flags, index l*K + k
    RMatrix los_angle;             ///< L x K, radians in [0, 2*pi)
    std::vector<IndexSet> support; ///< L*K angular supports
    double snr = 0.0;
    double ue_tx_power_dbm = 0.0;

    const IndexSet& support_of(int l, int k) const { return support[static_cast<size_t>(l) * num_ues + k]; }
    bool is_los(int l, int k) const { return los[static_cast<size_t>(l) * num_ues + k] != 0; }
};

/// Computes all pair statistics for fixed positions. Shadowing and LOS draws consume `rng`.
inline NetworkTopology topology_from_positions(const SimConfig& cfg, std::vector<Point> rus,
                                               std::vector<Point> ues, RandomStream& rng) {
    const PathlossModel model = PathlossModel::from_config(cfg);
    const PowerCalibration cal = calibrate_ue_power(cfg);
    NetworkTopology t;
    t.num_rus = static_cast<int>(rus.size());
    t.num_ues = static_cast<int>(ues.size());
    t.antennas = cfg.antennas_per_ru;
    t.ru_positions = std::move(rus);
    t.ue_positions = std::move(ues);
    t.beta.resize(t.num_rus, t.num_ues);
    t.los_angle.resize(t.num_rus, t.num_ues);
    t.los.assign(static_cast<size_t>(t.num_rus) * t.num_ues, 0);
    t.support.resize(static_cast<size_t>(t.num_rus) * t.num_ues);
    t.snr = cal.snr;
    t.ue_tx_power_dbm = cal.ue_tx_power_dbm;
    for (int l = 0; l < t.num_rus; ++l) {
        for (int k = 0; k < t.num_ues; ++k) {
            const Point d = torus_displacement(t.ru_positions[l], t.ue_positions[k], cfg.area_side_m);
            const double dist = std::max(std::hypot(d.x, d.y), cfg.min_distance_m);
            const bool los = rng.bernoulli(los_probability(dist));
            const double sigma = los ? model.shadowing_los_db : model.shadowing_nlos_db;
            const double shadow = sigma > 0.0 ? sigma * rng.gaussian() : 0.0;
            const double pl = pathloss_db(dist, los, model) + shadow;
            double angle = std::atan2(d.y, d.x);
            if (angle < 0.0) angle += 2.0 * kPi;
            const size_t idx = static_cast<size_t>(l) * t.num_ues + k;
            t.beta(l, k) = std::pow(10.0, -pl / 10.0);
            t.los[idx] = los ? 1 : 0;
            t.los_angle(l, k) = angle;
            t.support[idx] = angular_support(angle, cfg.angular_spread_rad, cfg.antennas_per_ru);
        }
    }
    return t;
}

/// RU and UE positions i.i.d. uniform on the square, distances on the torus.
inline NetworkTopology generate_topology(const SimConfig& cfg, RandomStream& rng) {
    std::vector<Point> rus(cfg.num_rus);
    std::vector<Point> ues(cfg.num_ues);
    for (auto& p : rus) p = {rng.uniform(0.0, cfg.area_side_m), rng.uniform(0.0, cfg.area_side_m)};
    for (auto& p : ues) p = {rng.uniform(0.0, cfg.area_side_m), rng.uniform(0.0, cfg.area_side_m)};
    return topology_from_positions(cfg, std::move(rus), std::move(ues), rng);
}

}  // namespace cfsim
