#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfsim/types.hpp"

namespace cfsim {

/// Raised for any invalid configuration value; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const { return field_; }

private:
    std::string field_;
};

inline bool is_prime(int n) {
    if (n < 2) return false;
    for (int d = 2; d * d <= n; ++d) {
        if (n % d == 0) return false;
    }
    return true;
}

/// All simulation parameters. Physical units are in the field names.
struct SimConfig {
    // Geometry and network size.
    double area_side_m = 2000.0;
    int num_rus = 40;
    int num_ues = 100;
    int antennas_per_ru = 16;
    double angular_spread_rad = kPi / 8.0;

    // Slot structure and clustering.
    int pilot_dim = 20;
    int slot_dim = 200;
    int max_cluster_size = 10;
    double snr_threshold = 1.0;

    // Link budget.
    double bandwidth_hz = 10e6;
    double noise_psd_dbm_hz = -174.0;
    double carrier_freq_ghz = 3.7;
    double ru_height_m = 10.0;
    double ue_height_m = 2.0;
    double shadowing_los_db = 4.0;
    double shadowing_nlos_db = 7.82;
    double min_distance_m = 10.0;
    double calibration_distance_factor = 3.0;
    /// NaN means "calibrate so that the mean gain at the reference distance gives 0 dB".
    double ue_tx_power_dbm = std::numeric_limits<double>::quiet_NaN();

    // SRS hopping.
    int srs_order = 61;
    int srs_length = 200;
    /// 0 selects the equal-area disk radius d_L.
    double hex_radius_m = 0.0;

    // Subspace estimation.
    double rpca_lambda_scale = 0.25;
    double rpca_tol = 1e-6;
    int rpca_max_iters = 500;
    /// 0 selects floor(M/2).
    int max_rank = 0;

    // Receivers.
    double collinearity_threshold = 0.999;
    int lsfd_window = 100;
    double lpzf_margin_db = 40.0;

    // Ergodic-rate bounds.
    std::vector<double> cuatf_pilot_energies{1.0, 2.0, 5.0, 10.0, 20.0, 50.0};

    std::uint64_t rng_seed = 1;

    /// Radius of a disk with area A/L.
    double equal_area_radius_m() const {
        return std::sqrt(area_side_m * area_side_m / (kPi * num_rus));
    }

    double effective_hex_radius_m() const {
        return hex_radius_m > 0.0 ? hex_radius_m : equal_area_radius_m();
    }

    int effective_max_rank() const {
        return max_rank > 0 ? max_rank : std::max(1, antennas_per_ru / 2);
    }

    void validate() const {
        auto positive = [](const char* name, double v) {
            if (!(v > 0.0)) throw ConfigError(name, "must be positive");
        };
        positive("area_side_m", area_side_m);
        positive("num_rus", num_rus);
        positive("num_ues", num_ues);
        positive("antennas_per_ru", antennas_per_ru);
        positive("pilot_dim", pilot_dim);
        positive("slot_dim", slot_dim);
        positive("max_cluster_size", max_cluster_size);
        positive("snr_threshold", snr_threshold);
        positive("bandwidth_hz", bandwidth_hz);
        positive("carrier_freq_ghz", carrier_freq_ghz);
        positive("srs_order", srs_order);
        positive("srs_length", srs_length);
        positive("min_distance_m", min_distance_m);
        positive("calibration_distance_factor", calibration_distance_factor);
        positive("rpca_lambda_scale", rpca_lambda_scale);
        positive("rpca_tol", rpca_tol);
        positive("rpca_max_iters", rpca_max_iters);
        positive("lsfd_window", lsfd_window);
        if (pilot_dim > slot_dim) throw ConfigError("pilot_dim", "must not exceed slot_dim");
        if (!(angular_spread_rad > 0.0 && angular_spread_rad < 2.0 * kPi)) {
            throw ConfigError("angular_spread_rad", "must lie in (0, 2*pi)");
        }
        if (!is_prime(srs_order)) throw ConfigError("srs_order", "must be prime");
        if (ru_height_m <= 1.0 || ue_height_m <= 1.0) {
            throw ConfigError(ru_height_m <= 1.0 ? "ru_height_m" : "ue_height_m",
                              "must exceed the 1 m effective environment height");
        }
        if (shadowing_los_db < 0.0) throw ConfigError("shadowing_los_db", "must be non-negative");
        if (shadowing_nlos_db < 0.0) throw ConfigError("shadowing_nlos_db", "must be non-negative");
        if (hex_radius_m < 0.0) throw ConfigError("hex_radius_m", "must be non-negative");
        if (max_rank < 0) throw ConfigError("max_rank", "must be non-negative");
        if (!(collinearity_threshold > 0.0 && collinearity_threshold <= 1.0)) {
            throw ConfigError("collinearity_threshold", "must lie in (0, 1]");
        }
        if (lpzf_margin_db < 0.0) throw ConfigError("lpzf_margin_db", "must be non-negative");
        for (double e : cuatf_pilot_energies) {
            if (!(e > 0.0 && e < slot_dim)) {
                throw ConfigError("cuatf_pilot_energies", "each value must lie in (0, slot_dim)");
            }
        }
    }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
    j = nlohmann::json{
        {"area_side_m", c.area_side_m},
        {"num_rus", c.num_rus},
        {"num_ues", c.num_ues},
        {"antennas_per_ru", c.antennas_per_ru},
        {"angular_spread_rad", c.angular_spread_rad},
        {"pilot_dim", c.pilot_dim},
        {"slot_dim", c.slot_dim},
        {"max_cluster_size", c.max_cluster_size},
        {"snr_threshold", c.snr_threshold},
        {"bandwidth_hz", c.bandwidth_hz},
        {"noise_psd_dbm_hz", c.noise_psd_dbm_hz},
        {"carrier_freq_ghz", c.carrier_freq_ghz},
        {"ru_height_m", c.ru_height_m},
        {"ue_height_m", c.ue_height_m},
        {"shadowing_los_db", c.shadowing_los_db},
        {"shadowing_nlos_db", c.shadowing_nlos_db},
        {"min_distance_m", c.min_distance_m},
        {"calibration_distance_factor", c.calibration_distance_factor},
        {"srs_order", c.srs_order},
        {"srs_length", c.srs_length},
        {"hex_radius_m", c.hex_radius_m},
        {"rpca_lambda_scale", c.rpca_lambda_scale},
        {"rpca_tol", c.rpca_tol},
        {"rpca_max_iters", c.rpca_max_iters},
        {"max_rank", c.max_rank},
        {"collinearity_threshold", c.collinearity_threshold},
        {"lsfd_window", c.lsfd_window},
        {"lpzf_margin_db", c.lpzf_margin_db},
        {"cuatf_pilot_energies", c.cuatf_pilot_energies},
        {"rng_seed", c.rng_seed},
    };
    if (std::isnan(c.ue_tx_power_dbm)) {
        j["ue_tx_power_dbm"] = nullptr;
    } else {
        j["ue_tx_power_dbm"] = c.ue_tx_power_dbm;
    }
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* name, T& out) {
    auto it = j.find(name);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(name, std::string("wrong type (") + e.what() + ")");
    }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `base`. Unknown keys are rejected.
inline SimConfig apply_overrides(SimConfig base, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config", "must be a JSON object");
    nlohmann::json known;
    to_json(known, base);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.contains(it.key())) throw ConfigError(it.key(), "unknown configuration key");
    }
    using detail::read_field;
    read_field(j, "area_side_m", base.area_side_m);
    read_field(j, "num_rus", base.num_rus);
    read_field(j, "num_ues", base.num_ues);
    read_field(j, "antennas_per_ru", base.antennas_per_ru);
    read_field(j, "angular_spread_rad", base.angular_spread_rad);
    read_field(j, "pilot_dim", base.pilot_dim);
    read_field(j, "slot_dim", base.slot_dim);
    read_field(j, "max_cluster_size", base.max_cluster_size);
    read_field(j, "snr_threshold", base.snr_threshold);
    read_field(j, "bandwidth_hz", base.bandwidth_hz);
    read_field(j, "noise_psd_dbm_hz", base.noise_psd_dbm_hz);
    read_field(j, "carrier_freq_ghz", base.carrier_freq_ghz);
    read_field(j, "ru_height_m", base.ru_height_m);
    read_field(j, "ue_height_m", base.ue_height_m);
    read_field(j, "shadowing_los_db", base.shadowing_los_db);
    read_field(j, "shadowing_nlos_db", base.shadowing_nlos_db);
    read_field(j, "min_distance_m", base.min_distance_m);
    read_field(j, "calibration_distance_factor", base.calibration_distance_factor);
    read_field(j, "srs_order", base.srs_order);
    read_field(j, "srs_length", base.srs_length);
    read_field(j, "hex_radius_m", base.hex_radius_m);
    read_field(j, "rpca_lambda_scale", base.rpca_lambda_scale);
    read_field(j, "rpca_tol", base.rpca_tol);
    read_field(j, "rpca_max_iters", base.rpca_max_iters);
    read_field(j, "max_rank", base.max_rank);
    read_field(j, "collinearity_threshold", base.collinearity_threshold);
    read_field(j, "lsfd_window", base.lsfd_window);
    read_field(j, "lpzf_margin_db", base.lpzf_margin_db);
    read_field(j, "cuatf_pilot_energies", base.cuatf_pilot_energies);
    read_field(j, "rng_seed", base.rng_seed);
    if (auto it = j.find("ue_tx_power_dbm"); it != j.end()) {
        if (it->is_null()) {
            base.ue_tx_power_dbm = std::numeric_limits<double>::quiet_NaN();
        } else if (it->is_number()) {
            base.ue_tx_power_dbm = it->get<double>();
        } else {
            throw ConfigError("ue_tx_power_dbm", "must be a number or null");
        }
    }
    return base;
}

inline SimConfig config_from_json(const nlohmann::json& j) {
    SimConfig cfg = apply_overrides(SimConfig{}, j);
    cfg.validate();
    return cfg;
}

/// 64-bit FNV-1a over the canonical JSON dump; stable across platforms.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const SimConfig& cfg) {
    nlohmann::json j;
    to_json(j, cfg);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path, std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace cfsim
