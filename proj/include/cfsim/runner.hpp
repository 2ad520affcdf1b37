#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cfsim/channel.hpp"
#include "cfsim/cluster.hpp"
#include "cfsim/config.hpp"
#include "cfsim/dmrs.hpp"
#include "cfsim/duality_power.hpp"
#include "cfsim/evaluation.hpp"
#include "cfsim/receivers.hpp"
#include "cfsim/rng.hpp"
#include "cfsim/rpca.hpp"
#include "cfsim/srs_hopping.hpp"
#include "cfsim/subspace_emulator.hpp"
#include "cfsim/topology.hpp"

namespace cfsim {

inline const std::vector<std::string>& known_schemes() {
    static const std::vector<std::string> s{"lmmse", "lsfd", "clzf", "lzf", "lpzf"};
    return s;
}

inline const std::vector<std::string>& known_csi_modes() {
    static const std::vector<std::string> s{"ideal", "pm", "sp-true", "sp-rpca", "sp-emulated"};
    return s;
}

inline bool is_duality_scheme(const std::string& s) { return s == "lmmse" || s == "lsfd" || s == "clzf"; }

struct RunSpec {
    std::string name = "run";
    SimConfig cfg;
    nlohmann::json overrides = nlohmann::json::object();
    std::vector<std::string> schemes;
    std::vector<std::string> csi_modes;
    int num_topologies = 1;
    int draws_per_topology = 200;
    int first_topology = 0;

    void validate() const {
        cfg.validate();
        if (schemes.empty()) throw ConfigError("schemes", "must list at least one scheme");
        if (csi_modes.empty()) throw ConfigError("csi_modes", "must list at least one CSI mode");
        for (const auto& s : schemes) {
            if (std::find(known_schemes().begin(), known_schemes().end(), s) == known_schemes().end()) {
                throw ConfigError("schemes", "unknown scheme '" + s + "'");
            }
        }
        for (const auto& c : csi_modes) {
            if (std::find(known_csi_modes().begin(), known_csi_modes().end(), c) == known_csi_modes().end()) {
                throw ConfigError("csi_modes", "unknown CSI mode '" + c + "'");
            }
        }
        if (num_topologies < 1) throw ConfigError("num_topologies", "must be positive");
        if (draws_per_topology < 1) throw ConfigError("draws_per_topology", "must be positive");
        if (first_topology < 0) throw ConfigError("first_topology", "must be non-negative");
    }

    bool needs(const std::string& csi) const {
        return std::find(csi_modes.begin(), csi_modes.end(), csi) != csi_modes.end();
    }
};

struct DatasetSpec {
    int num_topologies = 10;
    int first_topology = 0;
    std::string output = "emulator_distribution.json";
};

struct ExperimentPlan {
    std::uint64_t master_seed = 1;
    int jobs = 1;
    SimConfig base;
    std::vector<RunSpec> runs;
    std::optional<std::string> emulator_path;
    DatasetSpec dataset;
};

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) return {};
    try {
        return j.at(key).get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(key, "must be a list of strings");
    }
}

inline int int_field(const nlohmann::json& j, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer()) throw ConfigError(key, "must be an integer");
    return j.at(key).get<int>();
}

inline std::string sweep_label(const nlohmann::json& v) {
    if (v.is_number_float()) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", v.get<double>());
        return buf;
    }
    return v.dump();
}

}  // namespace detail

/// Parses a plan. `base_dir` resolves relative paths inside the plan.
inline ExperimentPlan plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("plan", "must be a JSON object");
    static const std::set<std::string> top_keys{"master_seed", "jobs", "base", "runs", "emulator_distribution", "dataset"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!top_keys.count(it.key())) throw ConfigError(it.key(), "unknown plan key");
    }
    ExperimentPlan plan;
    plan.base = apply_overrides(SimConfig{}, j.value("base", nlohmann::json::object()));
    plan.base.validate();
    plan.master_seed = plan.base.rng_seed;
    if (j.contains("master_seed")) {
        if (!j.at("master_seed").is_number_unsigned()) throw ConfigError("master_seed", "must be a non-negative integer");
        plan.master_seed = j.at("master_seed").get<std::uint64_t>();
    }
    plan.jobs = detail::int_field(j, "jobs", 1);
    if (plan.jobs < 1) throw ConfigError("jobs", "must be positive");
    if (j.contains("emulator_distribution")) {
        plan.emulator_path = (base_dir / j.at("emulator_distribution").get<std::string>()).string();
    }
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        static const std::set<std::string> keys{"num_topologies", "first_topology", "output"};
        for (auto it = d.begin(); it != d.end(); ++it) {
            if (!keys.count(it.key())) throw ConfigError("dataset." + it.key(), "unknown dataset key");
        }
        plan.dataset.num_topologies = detail::int_field(d, "num_topologies", plan.dataset.num_topologies);
        plan.dataset.first_topology = detail::int_field(d, "first_topology", plan.dataset.first_topology);
        plan.dataset.output = d.value("output", plan.dataset.output);
        if (plan.dataset.num_topologies < 1) throw ConfigError("dataset.num_topologies", "must be positive");
    }
    static const std::set<std::string> run_keys{"name", "overrides", "sweep", "schemes", "csi_modes",
                                                "num_topologies", "draws_per_topology", "first_topology"};
    for (const auto& jr : j.value("runs", nlohmann::json::array())) {
        for (auto it = jr.begin(); it != jr.end(); ++it) {
            if (!run_keys.count(it.key())) throw ConfigError("runs." + it.key(), "unknown run key");
        }
        RunSpec proto;
        proto.name = jr.value("name", std::string("run") + std::to_string(plan.runs.size()));
        proto.overrides = jr.value("overrides", nlohmann::json::object());
        proto.schemes = detail::string_list(jr, "schemes");
        proto.csi_modes = detail::string_list(jr, "csi_modes");
        proto.num_topologies = detail::int_field(jr, "num_topologies", 1);
        proto.draws_per_topology = detail::int_field(jr, "draws_per_topology", 200);
        proto.first_topology = detail::int_field(jr, "first_topology", 0);

        // Cartesian expansion of {"key": [values...]} sweeps, in key order.
        std::vector<std::pair<std::string, nlohmann::json>> variants{{proto.name, proto.overrides}};
        if (jr.contains("sweep")) {
            for (auto it = jr.at("sweep").begin(); it != jr.at("sweep").end(); ++it) {
                if (!it.value().is_array() || it.value().empty()) throw ConfigError("sweep." + it.key(), "must be a non-empty list");
                std::vector<std::pair<std::string, nlohmann::json>> next;
                for (const auto& [name, ov] : variants) {
                    for (const auto& v : it.value()) {
                        nlohmann::json o = ov;
                        o[it.key()] = v;
                        next.emplace_back(name + "_" + it.key() + "=" + detail::sweep_label(v), o);
                    }
                }
                variants = std::move(next);
            }
        }
        for (const auto& [name, ov] : variants) {
            RunSpec r = proto;
            r.name = name;
            r.overrides = ov;
            r.cfg = apply_overrides(plan.base, ov);
            r.validate();
            plan.runs.push_back(std::move(r));
        }
    }
    return plan;
}

/// Seeds depend on the topology index and purpose only, so runs that share geometry parameters see the
/// same topologies and fading (paired comparisons across schemes, CSI modes and sweeps).
inline std::uint64_t topology_seed(std::uint64_t master, int t, StreamPurpose p, std::uint64_t extra = 0) {
    return derive_seed(master, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(p), extra});
}

/// Emulator dataset topologies live on a separate seed branch from evaluation topologies.
inline constexpr std::uint64_t kDatasetBranch = 0xDA7A5E7ULL;

struct TopologySetup {
    NetworkTopology topo;
    ClusterGraph graph;
};

inline TopologySetup setup_topology(const SimConfig& cfg, std::uint64_t master, int t, std::uint64_t branch = 0) {
    RandomStream rt(topology_seed(master, t, StreamPurpose::Topology, branch));
    RandomStream rc(topology_seed(master, t, StreamPurpose::Cluster, branch));
    TopologySetup s{generate_topology(cfg, rt), {}};
    s.graph = form_clusters(s.topo, cfg, rc);
    return s;
}

/// One edge of the SRS / R-PCA pipeline.
struct EdgeSubspaceRecord {
    int ru = 0;
    int ue = 0;
    double beta = 0.0;
    IndexSet truth;
    IndexSet pp;
    double pe_pca = 0.0;
    double pe_pp = 0.0;
    double nf_pca = 0.0;
    double nf_pp = 0.0;
};

/// Runs SRS hopping and R-PCA on every edge of the graph.
inline std::vector<EdgeSubspaceRecord> rpca_edge_estimates(const SimConfig& cfg, const TopologySetup& s,
                                                           const DftBasis& F, RandomStream& rng,
                                                           std::vector<std::string>* warnings = nullptr) {
    const LatinSquareFamily fam(cfg.srs_order);
    const HoppingAssignment hop = assign_hopping(s.topo, fam, cfg);
    if (warnings) warnings->insert(warnings->end(), hop.warnings.begin(), hop.warnings.end());
    std::vector<EdgeSubspaceRecord> out;
    for (int l = 0; l < s.graph.num_rus; ++l) {
        if (s.graph.users[l].empty()) continue;
        const auto Y = generate_srs_for_ru(l, hop, fam, s.topo, s.graph, F, cfg.srs_length, rng);
        for (size_t c = 0; c < s.graph.users[l].size(); ++c) {
            const int k = s.graph.users[l][c];
            const auto est = estimate_subspace(Y[c], F, cfg);
            const CMatrix sigma = covariance(s.topo.beta(l, k), s.topo.support_of(l, k), F);
            EdgeSubspaceRecord r;
            r.ru = l;
            r.ue = k;
            r.beta = s.topo.beta(l, k);
            r.truth = s.topo.support_of(l, k);
            r.pp = est.pp.indices;
            r.pe_pca = power_efficiency(est.pca, sigma);
            // PP is a DFT index set, so its PE has an exact closed form; the trace form carries roundoff.
            r.pe_pp = power_efficiency_indices(r.truth, r.pp);
            r.nf_pca = frobenius_error(est.pca, sigma);
            r.nf_pp = frobenius_error(est.pp, sigma);
            out.push_back(std::move(r));
        }
    }
    return out;
}

struct TopologyResult {
    int index = 0;
    int num_active = 0;
    size_t num_edges = 0;
    int clzf_exclusions = 0;
    std::vector<UeRate> rows;
    std::vector<std::string> warnings;
};

namespace detail {

struct ComboAccumulator {
    std::string scheme;
    std::string csi;
    std::vector<RateAccumulator> ul;
    std::vector<RateAccumulator> dl;
    std::vector<std::vector<Complex>> gkk;
    std::vector<std::vector<double>> interference;
};

inline EdgeSubspaces subspaces_from_indices(const ClusterGraph& g, const DftBasis& F,
                                            const std::function<IndexSet(int, int)>& pick) {
    EdgeSubspaces sub;
    sub.num_ues = g.num_ues;
    sub.basis.resize(static_cast<size_t>(g.num_rus) * g.num_ues);
    for (int l = 0; l < g.num_rus; ++l) {
        for (int k : g.users[l]) sub.at(l, k) = F.columns(pick(l, k));
    }
    return sub;
}

}  // namespace detail

/// Full evaluation of one topology for every (scheme, CSI mode) pair of the run. All pairs see the same
/// channel and pilot-noise draws.
inline TopologyResult simulate_topology(const RunSpec& run, std::uint64_t master, int t,
                                        const EmpiricalSubspaceDistribution* emulator) {
    const SimConfig& cfg = run.cfg;
    const TopologySetup s = setup_topology(cfg, master, t);
    const NetworkTopology& topo = s.topo;
    const ClusterGraph& g = s.graph;
    const DftBasis F(cfg.antennas_per_ru);
    const int K = topo.num_ues;
    const double snr = topo.snr;
    const auto active = g.active_mask();
    const auto sigma2 = noise_inflation(g, topo);

    TopologyResult res;
    res.index = t;
    res.num_active = g.num_active();
    res.num_edges = g.num_edges();

    std::map<std::string, EdgeSubspaces> subspaces;
    if (run.needs("sp-true")) {
        subspaces["sp-true"] = detail::subspaces_from_indices(g, F, [&](int l, int k) { return topo.support_of(l, k); });
    }
    if (run.needs("sp-rpca")) {
        RandomStream rs(topology_seed(master, t, StreamPurpose::Srs));
        const auto recs = rpca_edge_estimates(cfg, s, F, rs, &res.warnings);
        std::map<std::pair<int, int>, IndexSet> pp;
        for (const auto& r : recs) pp[{r.ru, r.ue}] = r.pp;
        subspaces["sp-rpca"] = detail::subspaces_from_indices(g, F, [&](int l, int k) { return pp.at({l, k}); });
    }
    if (run.needs("sp-emulated")) {
        if (!emulator) throw std::runtime_error("CSI mode sp-emulated requires an emulator distribution");
        if (emulator->M != cfg.antennas_per_ru) throw std::runtime_error("emulator distribution was built for a different M");
        RandomStream re(topology_seed(master, t, StreamPurpose::Emulator));
        subspaces["sp-emulated"] = detail::subspaces_from_indices(
            g, F, [&](int l, int k) { return sample_estimate(*emulator, topo.beta(l, k), topo.support_of(l, k), re); });
    }

    auto draw = [&](int d, ChannelRealization& r, PilotField& field) {
        RandomStream rf(topology_seed(master, t, StreamPurpose::Fading, static_cast<std::uint64_t>(d)));
        r = sample_channel(topo, F, rf, &active, d);
        RandomStream rp(topology_seed(master, t, StreamPurpose::PilotNoise, static_cast<std::uint64_t>(d)));
        field = build_pilot_field(g, r, snr, rp);
    };
    auto estimates = [&](const std::string& csi, const ChannelRealization& r, const PilotField& field) {
        if (csi == "ideal") return estimate_ideal(r, g);
        ChannelEstimateSet pm = estimate_pm(field, g);
        if (csi == "pm") return pm;
        return estimate_sp(pm, g, subspaces.at(csi));
    };

    // LSFD weights from a window of realizations taken from the head of the same fading stream.
    std::map<std::string, std::vector<CVector>> lsfd_weights;
    if (std::find(run.schemes.begin(), run.schemes.end(), "lsfd") != run.schemes.end()) {
        std::map<std::string, LsfdAccumulator> acc;
        for (const auto& csi : run.csi_modes) acc.emplace(csi, LsfdAccumulator(g));
        ChannelRealization r;
        PilotField field;
        for (int d = 0; d < cfg.lsfd_window; ++d) {
            draw(d, r, field);
            for (const auto& csi : run.csi_modes) acc.at(csi).add(estimates(csi, r, field), sigma2, snr);
        }
        for (auto& [csi, a] : acc) lsfd_weights[csi] = a.weights(snr);
    }

    std::vector<detail::ComboAccumulator> combos;
    for (const auto& csi : run.csi_modes) {
        for (const auto& scheme : run.schemes) {
            detail::ComboAccumulator c;
            c.scheme = scheme;
            c.csi = csi;
            c.ul.resize(K);
            c.dl.resize(K);
            c.gkk.resize(K);
            c.interference.resize(K);
            combos.push_back(std::move(c));
        }
    }

    ChannelRealization r;
    PilotField field;
    for (int d = 0; d < run.draws_per_topology; ++d) {
        draw(d, r, field);
        size_t ci = 0;
        for (const auto& csi : run.csi_modes) {
            const ChannelEstimateSet est = estimates(csi, r, field);
            for (size_t si = 0; si < run.schemes.size(); ++si, ++ci) {
                auto& c = combos[ci];
                const std::string& scheme = c.scheme;
                if (is_duality_scheme(scheme)) {
                    ReceiveVectorSet v;
                    if (scheme == "lmmse") {
                        v = lmmse_combining(g, est, sigma2, snr);
                    } else if (scheme == "lsfd") {
                        v = lsfd_combining(g, est, sigma2, snr, lsfd_weights.at(csi));
                    } else {
                        v = clzf(g, est, cfg.collinearity_threshold);
                        res.clzf_exclusions += v.exclusions;
                    }
                    const ThetaMatrix theta = build_theta(g, v, est, topo);
                    const PowerAllocation q = solve_duality(theta, snr);
                    const CMatrix G = coupling_matrix(g, v, r.h);
                    for (int k = 0; k < K; ++k) {
                        if (!active[k]) continue;
                        c.ul[k].add(ul_sinr(G, active, snr, k));
                        c.dl[k].add(dl_sinr(G, q.q, active, snr, k));
                        c.gkk[k].push_back(G(k, k));
                        double interf = 0.0;
                        for (int j = 0; j < K; ++j) {
                            if (j != k && active[j]) interf += std::norm(G(k, j));
                        }
                        c.interference[k].push_back(interf);
                    }
                } else {
                    const LocalPrecoding p = scheme == "lzf"
                                                 ? lzf_precoder(g, est, topo, cfg.collinearity_threshold)
                                                 : lpzf_precoder(g, est, topo, cfg.collinearity_threshold, cfg.lpzf_margin_db);
                    const auto sinr = dl_dist_sinr(g, p, r, snr);
                    for (int k = 0; k < K; ++k) {
                        if (active[k]) c.dl[k].add(sinr[k]);
                    }
                }
            }
        }
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t ci = 0; ci < combos.size(); ++ci) {
        auto& c = combos[ci];
        RandomStream rb(topology_seed(master, t, StreamPurpose::Bound, ci));
        const bool duality = is_duality_scheme(c.scheme);
        for (int k = 0; k < K; ++k) {
            UeRate row;
            row.ue = k;
            row.scheme = c.scheme;
            row.csi_mode = c.csi;
            row.outage = !active[k];
            if (active[k]) {
                row.r_dl = c.dl[k].mean();
                if (duality) {
                    row.r_ul = c.ul[k].mean();
                    row.r_ul_stderr = c.ul[k].std_error();
                    const GainStatistics gs = gain_statistics(c.gkk[k], c.interference[k]);
                    row.r_uatf = uatf_rate(gs, snr);
                    row.r_cuatf = 0.0;
                    for (double ep : cfg.cuatf_pilot_energies) {
                        const double v = cuatf_rate(c.gkk[k], gs, snr, cfg.slot_dim, ep, rb);
                        row.r_cuatf_sweep.push_back(v);
                        row.r_cuatf = std::max(row.r_cuatf, v);
                    }
                }
            }
            if (!duality) {
                row.r_ul = nan;
                row.r_uatf = nan;
                row.r_cuatf = nan;
            }
            row.se_ul = spectral_efficiency(row.r_ul, cfg.pilot_dim, cfg.slot_dim);
            row.se_dl = spectral_efficiency(row.r_dl, cfg.pilot_dim, cfg.slot_dim);
            res.rows.push_back(std::move(row));
        }
    }
    return res;
}

struct RunResult {
    RunSpec spec;
    std::vector<TopologyResult> topologies;
};

/// Evaluates topologies [first, first + n) in parallel; results are stored by index, so the output
/// does not depend on `jobs`.
inline RunResult execute_run(const RunSpec& run, std::uint64_t master, const EmpiricalSubspaceDistribution* emulator,
                             int jobs = 1) {
    RunResult out;
    out.spec = run;
    out.topologies.resize(run.num_topologies);
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            const int i = next++;
            if (i >= run.num_topologies) return;
            try {
                out.topologies[i] = simulate_topology(run, master, run.first_topology + i, emulator);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min(jobs, run.num_topologies));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Emulator dataset

struct EmulatorDataset {
    std::vector<EdgeSubspaceRecord> records;
    EmpiricalSubspaceDistribution distribution;
};

inline std::vector<EdgeSubspaceRecord> collect_rpca_records(const SimConfig& cfg, std::uint64_t master, int first,
                                                            int count, int jobs = 1,
                                                            std::vector<std::string>* warnings = nullptr) {
    std::vector<std::vector<EdgeSubspaceRecord>> per(count);
    std::vector<std::vector<std::string>> warn(count);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int i = next++;
            if (i >= count) return;
            const int t = first + i;
            const TopologySetup s = setup_topology(cfg, master, t, kDatasetBranch);
            const DftBasis F(cfg.antennas_per_ru);
            RandomStream rs(topology_seed(master, t, StreamPurpose::Srs, kDatasetBranch));
            per[i] = rpca_edge_estimates(cfg, s, F, rs, &warn[i]);
        }
    };
    const int n = std::max(1, std::min(jobs, count));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::vector<EdgeSubspaceRecord> all;
    for (int i = 0; i < count; ++i) {
        all.insert(all.end(), per[i].begin(), per[i].end());
        if (warnings) warnings->insert(warnings->end(), warn[i].begin(), warn[i].end());
    }
    return all;
}

inline EmulatorDataset build_emulator_dataset(const SimConfig& cfg, std::uint64_t master, int first, int count,
                                              int jobs = 1, std::vector<std::string>* warnings = nullptr) {
    EmulatorDataset ds;
    ds.records = collect_rpca_records(cfg, master, first, count, jobs, warnings);
    std::vector<SubspaceSample> samples;
    samples.reserve(ds.records.size());
    for (const auto& r : ds.records) samples.push_back({r.truth, r.pp, r.beta});
    ds.distribution = build_distribution(std::move(samples), cfg.antennas_per_ru, cfg.angular_spread_rad);
    ds.distribution.config_hash = config_hash(cfg);
    return ds;
}

/// Per-bin mean PE / NF of the PCA and PP estimates (bins of the dataset's own distribution).
inline nlohmann::json dataset_bin_summary(const EmulatorDataset& ds) {
    const int B = ds.distribution.num_bins();
    std::vector<double> pe_pca(B, 0.0), pe_pp(B, 0.0), nf_pca(B, 0.0), nf_pp(B, 0.0);
    std::vector<int> n(B, 0);
    for (const auto& r : ds.records) {
        const int b = ds.distribution.bin_of(r.beta);
        pe_pca[b] += r.pe_pca;
        pe_pp[b] += r.pe_pp;
        nf_pca[b] += r.nf_pca;
        nf_pp[b] += r.nf_pp;
        ++n[b];
    }
    nlohmann::json bins = nlohmann::json::array();
    for (int b = 0; b < B; ++b) {
        const double c = std::max(1, n[b]);
        bins.push_back({{"bin", b},
                        {"beta_low", ds.distribution.bin_edges[b]},
                        {"beta_high", ds.distribution.bin_edges[b + 1]},
                        {"count", n[b]},
                        {"mean_pe_pca", pe_pca[b] / c},
                        {"mean_pe_pp", pe_pp[b] / c},
                        {"mean_nf_pca", nf_pca[b] / c},
                        {"mean_nf_pp", nf_pp[b] / c}});
    }
    return bins;
}

// ---------------------------------------------------------------------------------------------
// Reports

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline void write_csv(std::ostream& os, const RunResult& r) {
    os << "# config_hash=" << config_hash(r.spec.cfg) << " run=" << r.spec.name << '\n';
    os << "topology,ue_id,scheme,csi_mode,outage,R_ul,R_dl,SE_ul,SE_dl,R_UatF,R_CUatF\n";
    for (const auto& t : r.topologies) {
        for (const auto& row : t.rows) {
            os << t.index << ',' << row.ue << ',' << row.scheme << ',' << row.csi_mode << ',' << (row.outage ? 1 : 0)
               << ',' << format_number(row.r_ul) << ',' << format_number(row.r_dl) << ',' << format_number(row.se_ul)
               << ',' << format_number(row.se_dl) << ',' << format_number(row.r_uatf) << ','
               << format_number(row.r_cuatf) << '\n';
        }
    }
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-UE values of one (scheme, CSI mode) pair across all topologies; outage UEs contribute 0.
inline std::vector<double> collect(const RunResult& r, const std::string& scheme, const std::string& csi,
                                   double UeRate::*field) {
    std::vector<double> out;
    for (const auto& t : r.topologies) {
        for (const auto& row : t.rows) {
            if (row.scheme == scheme && row.csi_mode == csi) out.push_back(row.outage ? 0.0 : row.*field);
        }
    }
    return out;
}

/// Mean over topologies of the sum over UEs of `field`.
inline double mean_sum(const RunResult& r, const std::string& scheme, const std::string& csi, double UeRate::*field) {
    double total = 0.0;
    for (const auto& t : r.topologies) {
        for (const auto& row : t.rows) {
            if (row.scheme == scheme && row.csi_mode == csi && !row.outage) total += row.*field;
        }
    }
    return total / static_cast<double>(r.topologies.size());
}

inline nlohmann::json run_summary(const RunResult& r, std::uint64_t master) {
    nlohmann::json cfg;
    to_json(cfg, r.spec.cfg);
    nlohmann::json combos = nlohmann::json::array();
    for (const auto& csi : r.spec.csi_modes) {
        for (const auto& scheme : r.spec.schemes) {
            nlohmann::json c{{"scheme", scheme}, {"csi_mode", csi}};
            for (auto [name, field] : {std::pair{"R_ul", &UeRate::r_ul}, std::pair{"R_dl", &UeRate::r_dl},
                                       std::pair{"R_UatF", &UeRate::r_uatf}, std::pair{"R_CUatF", &UeRate::r_cuatf}}) {
                auto v = collect(r, scheme, csi, field);
                if (std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); })) continue;
                std::sort(v.begin(), v.end());
                c[std::string("median_") + name] = median(v);
                c[std::string("sorted_") + name] = v;
            }
            c["mean_sum_SE_ul"] = is_duality_scheme(scheme) ? nlohmann::json(mean_sum(r, scheme, csi, &UeRate::se_ul))
                                                            : nlohmann::json(nullptr);
            c["mean_sum_SE_dl"] = mean_sum(r, scheme, csi, &UeRate::se_dl);
            if (is_duality_scheme(scheme)) {
                nlohmann::json sweep = nlohmann::json::array();
                for (size_t e = 0; e < r.spec.cfg.cuatf_pilot_energies.size(); ++e) {
                    std::vector<double> v;
                    for (const auto& t : r.topologies) {
                        for (const auto& row : t.rows) {
                            if (row.scheme == scheme && row.csi_mode == csi && !row.outage) v.push_back(row.r_cuatf_sweep[e]);
                        }
                    }
                    sweep.push_back({{"pilot_energy", r.spec.cfg.cuatf_pilot_energies[e]}, {"median_R_CUatF", median(v)}});
                }
                c["cuatf_sweep"] = sweep;
            }
            combos.push_back(c);
        }
    }
    nlohmann::json topo = nlohmann::json::array();
    for (const auto& t : r.topologies) {
        topo.push_back({{"index", t.index}, {"active_ues", t.num_active}, {"edges", t.num_edges},
                        {"clzf_exclusions", t.clzf_exclusions}, {"warnings", t.warnings}});
    }
    const PowerCalibration cal = calibrate_ue_power(r.spec.cfg);
    return {{"run", r.spec.name},
            {"config_hash", config_hash(r.spec.cfg)},
            {"master_seed", master},
            {"config", cfg},
            {"overrides", r.spec.overrides},
            {"ue_tx_power_dbm", cal.ue_tx_power_dbm},
            {"snr_db", 10.0 * std::log10(cal.snr)},
            {"num_topologies", r.spec.num_topologies},
            {"draws_per_topology", r.spec.draws_per_topology},
            {"topologies", topo},
            {"results", combos}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + p.string());
}

inline void write_emulator_outputs(const EmulatorDataset& ds, const std::filesystem::path& dist_path) {
    write_text(dist_path, ds.distribution.to_json().dump(1) + "\n");
    nlohmann::json summary{{"config_hash", ds.distribution.config_hash},
                           {"edges", ds.records.size()},
                           {"bins", dataset_bin_summary(ds)}};
    std::filesystem::path sp = dist_path;
    sp.replace_extension(".bins.json");
    write_text(sp, summary.dump(1) + "\n");
}

inline EmpiricalSubspaceDistribution load_distribution(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open emulator distribution " + path);
    return EmpiricalSubspaceDistribution::from_json(nlohmann::json::parse(in));
}

/// Executes every run of the plan and writes <name>.csv, <name>.json and summary.json into `out_dir`.
inline void run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir, std::ostream& log = std::cerr) {
    if (plan.runs.empty()) throw ConfigError("runs", "plan contains no runs");
    std::filesystem::create_directories(out_dir);
    std::optional<EmpiricalSubspaceDistribution> emulator;
    const bool need_emulator = std::any_of(plan.runs.begin(), plan.runs.end(), [](const RunSpec& r) { return r.needs("sp-emulated"); });
    if (need_emulator) {
        if (plan.emulator_path) {
            emulator = load_distribution(*plan.emulator_path);
        } else {
            log << "building emulator distribution from " << plan.dataset.num_topologies << " topologies\n";
            const EmulatorDataset ds = build_emulator_dataset(plan.base, plan.master_seed, plan.dataset.first_topology,
                                                              plan.dataset.num_topologies, plan.jobs);
            write_emulator_outputs(ds, out_dir / plan.dataset.output);
            emulator = ds.distribution;
        }
    }
    nlohmann::json table = nlohmann::json::array();
    for (const auto& run : plan.runs) {
        log << "run " << run.name << ": " << run.num_topologies << " topologies x " << run.draws_per_topology << " draws\n";
        const RunResult r = execute_run(run, plan.master_seed, emulator ? &*emulator : nullptr, plan.jobs);
        for (const auto& t : r.topologies) {
            for (const auto& w : t.warnings) log << "warning: topology " << t.index << ": " << w << '\n';
        }
        std::ostringstream csv;
        write_csv(csv, r);
        write_text(out_dir / (run.name + ".csv"), csv.str());
        const nlohmann::json summary = run_summary(r, plan.master_seed);
        write_text(out_dir / (run.name + ".json"), summary.dump(1) + "\n");
        for (const auto& c : summary.at("results")) {
            table.push_back({{"run", run.name},
                             {"overrides", run.overrides},
                             {"ue_tx_power_dbm", summary.at("ue_tx_power_dbm")},
                             {"scheme", c.at("scheme")},
                             {"csi_mode", c.at("csi_mode")},
                             {"mean_sum_SE_ul", c.at("mean_sum_SE_ul")},
                             {"mean_sum_SE_dl", c.at("mean_sum_SE_dl")}});
        }
    }
    write_text(out_dir / "summary.json",
               nlohmann::json{{"master_seed", plan.master_seed}, {"sum_se_table", table}}.dump(1) + "\n");
}

/// Empirical CDF rows (scheme, csi_mode, metric, value, cdf) from a run CSV.
inline void export_cdf(const std::filesystem::path& csv_path, std::ostream& os) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open " + csv_path.string());
    std::string line;
    std::string hash_line;
    std::vector<std::string> header;
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> series;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            hash_line = line;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (header.empty()) {
            header = cells;
            continue;
        }
        if (cells.size() != header.size()) throw std::runtime_error("malformed CSV row in " + csv_path.string());
        for (size_t c = 5; c < cells.size(); ++c) {
            if (cells[c] == "nan") continue;
            series[{cells[2], cells[3], header[c]}].push_back(std::stod(cells[c]));
        }
    }
    if (header.empty()) throw std::runtime_error("empty CSV " + csv_path.string());
    if (!hash_line.empty()) os << hash_line << '\n';
    os << "scheme,csi_mode,metric,value,cdf\n";
    for (auto& [key, v] : series) {
        std::sort(v.begin(), v.end());
        for (size_t i = 0; i < v.size(); ++i) {
            os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << format_number(v[i])
               << ',' << format_number(static_cast<double>(i + 1) / v.size()) << '\n';
        }
    }
}

}  // namespace cfsim
