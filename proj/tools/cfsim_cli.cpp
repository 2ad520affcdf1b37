#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfsim/cfsim.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

cfsim::ExperimentPlan load_plan(const std::string& path, std::optional<std::uint64_t> seed, std::optional<int> jobs) {
    const nlohmann::json j = cfsim::read_json_file(path);
    cfsim::ExperimentPlan plan = cfsim::plan_from_json(j, fs::path(path).parent_path());
    if (seed) plan.master_seed = *seed;
    if (jobs) plan.jobs = *jobs;
    return plan;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cell-free massive MIMO system-level simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::string cdf_output;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "Plan file (JSON, // comments allowed)")->required();
        sub->add_option("-o,--output-dir", output_dir, "Directory for report files")->capture_default_str();
        sub->add_option("-s,--seed", seed, "Override the plan's master seed");
        sub->add_option("-j,--jobs", jobs, "Worker threads (topologies run in parallel)")->check(CLI::PositiveNumber);
    };

    CLI::App* run = app.add_subcommand("run", "Execute every run of a plan");
    add_common(run);
    CLI::App* dataset = app.add_subcommand("build-dataset", "Build the subspace emulator distribution");
    add_common(dataset);
    CLI::App* validate = app.add_subcommand("validate-config", "Check a plan and print the resolved runs");
    validate->add_option("config", config_path, "Plan file")->required();
    CLI::App* cdf = app.add_subcommand("export-cdf", "Write empirical CDFs from a run CSV");
    cdf->add_option("config", config_path, "Run CSV produced by `run`")->required();
    cdf->add_option("-o,--output", cdf_output, "Output CSV (default: <input>_cdf.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            const cfsim::ExperimentPlan plan = load_plan(config_path, std::nullopt, std::nullopt);
            for (const auto& r : plan.runs) {
                std::cout << r.name << "  config_hash=" << cfsim::config_hash(r.cfg) << "  topologies=" << r.num_topologies
                          << "  draws=" << r.draws_per_topology << '\n';
            }
            std::cout << "ok: " << plan.runs.size() << " run(s)\n";
            return kOk;
        }
        if (cdf->parsed()) {
            fs::path out = cdf_output;
            if (out.empty()) {
                out = fs::path(config_path);
                out.replace_filename(out.stem().string() + "_cdf.csv");
            }
            std::ofstream os(out, std::ios::binary);
            if (!os) throw std::runtime_error("cannot write " + out.string());
            cfsim::export_cdf(config_path, os);
            std::cerr << "wrote " << out.string() << '\n';
            return kOk;
        }
        const cfsim::ExperimentPlan plan = load_plan(config_path, seed, jobs);
        if (dataset->parsed()) {
            fs::create_directories(output_dir);
            std::vector<std::string> warnings;
            const auto ds = cfsim::build_emulator_dataset(plan.base, plan.master_seed, plan.dataset.first_topology,
                                                          plan.dataset.num_topologies, plan.jobs, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
            const fs::path dist = fs::path(output_dir) / plan.dataset.output;
            cfsim::write_emulator_outputs(ds, dist);
            std::cerr << "wrote " << dist.string() << " (" << ds.records.size() << " edges)\n";
            return kOk;
        }
        cfsim::run_plan(plan, output_dir);
        return kOk;
    } catch (const cfsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}
