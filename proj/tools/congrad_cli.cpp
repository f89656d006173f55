// congrad command-line driver: gen-data, train, filter-analyze, report.
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "congrad/harness.hpp"

namespace {

using congrad::harness::CliOverrides;
using congrad::harness::ExperimentConfig;

ExperimentConfig load_with_overrides(const std::string& config_path, const CliOverrides& o) {
    ExperimentConfig cfg = congrad::harness::load_config(config_path);
    congrad::harness::apply_overrides(cfg, o);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"congrad: gradient-consensus preference data filtering pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    CliOverrides overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out, arm, direction;
    std::optional<double> rho;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* copt = cmd->add_option("--config", config_path, "experiment config file (JSON)");
        if (need_config) copt->required();
        cmd->add_option("--seed", seed, "override the master seed");
        cmd->add_option("--out", out, "override the output directory");
        cmd->add_option("--arm", arm, "filter kind: congrad|reward_margin|length_margin|random");
        cmd->add_option("--direction", direction, "filter direction: max|min");
        cmd->add_option("--rho", rho, "retention fraction in (0, 1]");
    };

    auto* gen = app.add_subcommand("gen-data", "write synthetic prompt/target definitions");
    add_common(gen, true);

    bool resume = false;
    auto* train = app.add_subcommand("train", "run the self-rewarding training loop");
    add_common(train, true);
    train->add_flag("--resume", resume, "continue from the latest checkpoint");

    std::string report_path;
    std::vector<double> sweep_rhos;
    bool sweep_default = false;
    std::vector<std::string> metrics_paths;
    std::string conflict_path;
    std::string analyze_out = ".";
    auto* analyze = app.add_subcommand("filter-analyze", "summarize a filter report");
    analyze->add_option("report", report_path, "filter_report.jsonl path")->required();
    analyze->add_option("--rho", sweep_rhos, "retention fractions for the offline sweep");
    analyze->add_flag("--sweep", sweep_default, "sweep the default fractions 0.25 0.5 0.75");
    analyze->add_option("--metrics", metrics_paths, "metrics files for the final-loss table");
    analyze->add_option("--conflicts", conflict_path, "conflict report for per-round summaries");
    analyze->add_option("--out", analyze_out, "directory for filter_summary.json");

    std::vector<std::string> report_metrics;
    std::string report_out = ".";
    auto* report = app.add_subcommand("report", "render round-by-round tables from metrics");
    report->add_option("metrics", report_metrics, "one or more metrics.jsonl files")->required();
    report->add_option("--out", report_out, "directory for report.txt and report_series.csv");

    CLI11_PARSE(app, argc, argv);

    overrides.seed = seed;
    overrides.out = out;
    overrides.arm = arm;
    overrides.direction = direction;
    overrides.rho = rho;

    try {
        if (gen->parsed()) {
            congrad::harness::run_gen_data(load_with_overrides(config_path, overrides));
        } else if (train->parsed()) {
            congrad::harness::run_train(load_with_overrides(config_path, overrides), resume);
        } else if (analyze->parsed()) {
            if (sweep_default && sweep_rhos.empty()) sweep_rhos = {0.25, 0.5, 0.75};
            std::vector<std::filesystem::path> mpaths(metrics_paths.begin(), metrics_paths.end());
            congrad::harness::run_filter_analyze(report_path, sweep_rhos, mpaths, analyze_out,
                                                 conflict_path);
        } else if (report->parsed()) {
            std::vector<std::filesystem::path> mpaths(report_metrics.begin(), report_metrics.end());
            congrad::harness::run_report(mpaths, report_out);
        }
    } catch (const congrad::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
