#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "congrad/config.hpp"
#include "congrad/selfloop.hpp"

namespace congrad::harness {

// --- configuration ----------------------------------------------------

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Fills the sub-config seeds from the master seed (see config.hpp notes).
ExperimentConfig with_derived_seeds(ExperimentConfig cfg);

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> arm;        // filter kind
    std::optional<std::string> direction;  // max | min
    std::optional<double> rho;
};
void apply_overrides(ExperimentConfig& cfg, const CliOverrides& o);

// --- records on disk ---------------------------------------------------

nlohmann::json metrics_to_json(const selfloop::MetricsRecord& m);
selfloop::MetricsRecord metrics_from_json(const nlohmann::json& j);
nlohmann::json filter_record_to_json(const filtering::FilterRecord& r);
filtering::FilterRecord filter_record_from_json(const nlohmann::json& j);

// Reads a JSONL file, validating the header record; parse failures report
// the offending line number.
struct JsonlFile {
    nlohmann::json header;
    std::vector<nlohmann::json> records;
};
JsonlFile read_jsonl(const std::filesystem::path& path, const std::string& expect_format);

// --- output directory --------------------------------------------------

// Exclusive per-output-directory lock; a second CLI instance on the same
// directory fails fast instead of interleaving writes.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path path_;
};

// File names inside an output directory.
namespace files {
inline constexpr const char* prompts = "prompts.jsonl";
inline constexpr const char* preference_data = "preference_data.jsonl";
inline constexpr const char* filter_report = "filter_report.jsonl";
inline constexpr const char* conflict_report = "conflict_report.jsonl";
inline constexpr const char* metrics = "metrics.jsonl";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* checkpoints_dir = "checkpoints";
inline constexpr const char* filter_summary = "filter_summary.json";
inline constexpr const char* report_text = "report.txt";
inline constexpr const char* report_series = "report_series.csv";
}  // namespace files

// --- subcommand implementations -----------------------------------------
// These are the bodies of the CLI subcommands; the CLI maps exceptions to
// exit codes (1 validation, 2 runtime).

// Writes the synthetic per-language prompt/target definitions.
void run_gen_data(const ExperimentConfig& cfg);

// Runs (or resumes) the full training loop, writing per-round checkpoints,
// metrics, preference data, filter and conflict reports, and a manifest.
void run_train(const ExperimentConfig& cfg, bool resume = false);

// Summarizes a filter report: score histograms and retention counts per
// round and language, an optional offline ρ sweep re-selected from the
// recorded scores, per-round conflict summaries when a conflict report is
// given, and (when metrics files are given) final-round losses.
void run_filter_analyze(const std::filesystem::path& report_path, const std::vector<double>& rhos,
                        const std::vector<std::filesystem::path>& metrics_paths,
                        const std::filesystem::path& out_dir,
                        const std::filesystem::path& conflict_path = {});

// Renders round-by-round tables (one row per arm, rounds aligned columnwise)
// and plot-ready CSV series from one or more metrics files.
void run_report(const std::vector<std::filesystem::path>& metrics_paths,
                const std::filesystem::path& out_dir);

// Checkpoint io (round-trip exact).
void save_checkpoint(const std::filesystem::path& path, const selfloop::RoundState& state,
                     const ExperimentConfig& cfg);
selfloop::RoundState load_checkpoint(const std::filesystem::path& path,
                                     const ExperimentConfig& cfg);
// Highest completed round among checkpoint files, or 0 if none.
int find_last_checkpoint_round(const std::filesystem::path& out_dir);

}  // namespace congrad::harness
