#include "congrad/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace congrad::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_known_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ValidationError("config: unknown field '" + where + key + "'");
    }
}

json matrixless_config_core(const ExperimentConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("rounds");
    j.erase("output_dir");
    return j;
}

json consensus_to_json(const consensus::ConsensusGradient& c) {
    return {{"vector", c.vector},
            {"conflicts_resolved", c.conflicts_resolved},
            {"language_count", c.language_count}};
}

consensus::ConsensusGradient consensus_from_json(const json& j) {
    consensus::ConsensusGradient c;
    c.vector = j.at("vector").get<FlatVector>();
    c.conflicts_resolved = j.at("conflicts_resolved").get<int>();
    c.language_count = j.at("language_count").get<int>();
    return c;
}

json pair_to_json(const preference::PreferencePair& p, int round) {
    json j = {{"language", p.language},
              {"prompt_id", p.prompt_id},
              {"chosen", p.chosen},
              {"rejected", p.rejected},
              {"chosen_score", p.chosen_score},
              {"rejected_score", p.rejected_score}};
    if (round > 0) j["round"] = round;
    return j;
}

preference::PreferencePair pair_from_json(const json& j) {
    preference::PreferencePair p;
    p.language = j.at("language").get<std::string>();
    p.prompt_id = j.at("prompt_id").get<int>();
    p.chosen = j.at("chosen").get<std::vector<int>>();
    p.rejected = j.at("rejected").get<std::vector<int>>();
    p.chosen_score = j.at("chosen_score").get<int>();
    p.rejected_score = j.at("rejected_score").get<int>();
    return p;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (languages.empty()) throw ValidationError("languages must be non-empty");
    std::set<std::string> uniq(languages.begin(), languages.end());
    if (uniq.size() != languages.size()) throw ValidationError("languages must be unique");
    for (const auto& l : languages)
        if (l.empty()) throw ValidationError("language identifiers must be non-empty");
    if (prompts_per_language < 1) throw ValidationError("prompts_per_language must be >= 1");
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    if (candidates_per_prompt < 2) throw ValidationError("candidates_per_prompt must be >= 2");
    if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2");
    if (max_len < 1) throw ValidationError("max_len must be >= 1");
    if (!(language_overlap >= 0.0 && language_overlap <= 1.0))
        throw ValidationError("language_overlap must be in [0, 1]");
    if (judge_noise_std < 0.0) throw ValidationError("judge_noise_std must be >= 0");
    ema.validate();
    dpo.validate();
    filter.validate();
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (output_dir.empty()) throw ValidationError("output_dir must be non-empty");
}

json config_to_json(const ExperimentConfig& cfg) {
    return {{"format", "congrad-config"},
            {"version", 1},
            {"languages", cfg.languages},
            {"prompts_per_language", cfg.prompts_per_language},
            {"rounds", cfg.rounds},
            {"candidates_per_prompt", cfg.candidates_per_prompt},
            {"vocab_size", cfg.vocab_size},
            {"max_len", cfg.max_len},
            {"language_overlap", cfg.language_overlap},
            {"judge_noise_std", cfg.judge_noise_std},
            {"ema",
             {{"gamma", cfg.ema.gamma}, {"rank", cfg.ema.rank}, {"power_iters", cfg.ema.power_iters}}},
            {"dpo", {{"beta", cfg.dpo.beta}, {"alpha", cfg.dpo.alpha}}},
            {"filter",
             {{"kind", filtering::to_string(cfg.filter.kind)},
              {"direction", filtering::to_string(cfg.filter.direction)},
              {"retain_fraction", cfg.filter.retain_fraction}}},
            {"learning_rate", cfg.learning_rate},
            {"batch_size", cfg.batch_size},
            {"master_seed", cfg.master_seed},
            {"output_dir", cfg.output_dir}};
}

ExperimentConfig config_from_json(const json& j) {
    check_known_keys(j, {"format", "version", "languages", "prompts_per_language", "rounds",
                         "candidates_per_prompt", "vocab_size", "max_len", "language_overlap",
                         "judge_noise_std", "ema", "dpo", "filter", "learning_rate", "batch_size",
                         "master_seed", "output_dir"},
                     "");
    if (j.contains("format") && j.at("format") != "congrad-config")
        throw ValidationError("config: format must be 'congrad-config'");
    if (j.contains("version") && j.at("version") != 1)
        throw ValidationError("config: unsupported version");
    ExperimentConfig cfg;
    if (!j.contains("languages")) throw ValidationError("config: missing field 'languages'");
    cfg.languages = j.at("languages").get<std::vector<std::string>>();
    cfg.prompts_per_language = j.value("prompts_per_language", cfg.prompts_per_language);
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.candidates_per_prompt = j.value("candidates_per_prompt", cfg.candidates_per_prompt);
    cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
    cfg.max_len = j.value("max_len", cfg.max_len);
    cfg.language_overlap = j.value("language_overlap", cfg.language_overlap);
    cfg.judge_noise_std = j.value("judge_noise_std", cfg.judge_noise_std);
    if (j.contains("ema")) {
        const json& e = j.at("ema");
        check_known_keys(e, {"gamma", "rank", "power_iters"}, "ema.");
        cfg.ema.gamma = e.value("gamma", cfg.ema.gamma);
        cfg.ema.rank = e.value("rank", cfg.ema.rank);
        cfg.ema.power_iters = e.value("power_iters", cfg.ema.power_iters);
    }
    if (j.contains("dpo")) {
        const json& d = j.at("dpo");
        check_known_keys(d, {"beta", "alpha"}, "dpo.");
        cfg.dpo.beta = d.value("beta", cfg.dpo.beta);
        cfg.dpo.alpha = d.value("alpha", cfg.dpo.alpha);
    }
    if (j.contains("filter")) {
        const json& f = j.at("filter");
        check_known_keys(f, {"kind", "direction", "retain_fraction"}, "filter.");
        if (f.contains("kind")) cfg.filter.kind = filtering::filter_kind_from_string(f.at("kind"));
        if (f.contains("direction"))
            cfg.filter.direction = filtering::direction_from_string(f.at("direction"));
        cfg.filter.retain_fraction = f.value("retain_fraction", cfg.filter.retain_fraction);
    }
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config parse error in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path);
    out << config_to_json(cfg).dump(2) << "\n";
}

ExperimentConfig with_derived_seeds(ExperimentConfig cfg) {
    cfg.ema.seed = rng::derive(cfg.master_seed, rng::hash_str("ema"));
    cfg.filter.seed = rng::derive(cfg.master_seed, rng::hash_str("filter"));
    return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& o) {
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.out) cfg.output_dir = *o.out;
    if (o.arm) cfg.filter.kind = filtering::filter_kind_from_string(*o.arm);
    if (o.direction) cfg.filter.direction = filtering::direction_from_string(*o.direction);
    if (o.rho) cfg.filter.retain_fraction = *o.rho;
    cfg.validate();
}

// --- records -------------------------------------------------------------

json metrics_to_json(const selfloop::MetricsRecord& m) {
    json j = {{"round", m.round},
              {"language", m.language},
              {"preference_accuracy", m.preference_accuracy},
              {"mean_lp_dpo_loss", m.mean_lp_dpo_loss},
              {"retained_count", m.retained_count},
              {"conflict_count", m.conflict_count}};
    if (m.mean_congrad_score)
        j["mean_congrad_score"] = *m.mean_congrad_score;
    else
        j["mean_congrad_score"] = nullptr;
    return j;
}

selfloop::MetricsRecord metrics_from_json(const json& j) {
    selfloop::MetricsRecord m;
    m.round = j.at("round").get<int>();
    m.language = j.at("language").get<std::string>();
    m.preference_accuracy = j.at("preference_accuracy").get<double>();
    m.mean_lp_dpo_loss = j.at("mean_lp_dpo_loss").get<double>();
    m.retained_count = j.at("retained_count").get<int>();
    m.conflict_count = j.at("conflict_count").get<int>();
    if (j.contains("mean_congrad_score") && !j.at("mean_congrad_score").is_null())
        m.mean_congrad_score = j.at("mean_congrad_score").get<double>();
    return m;
}

json filter_record_to_json(const filtering::FilterRecord& r) {
    return {{"round", r.round},
            {"language", r.language},
            {"sample_id", r.sample_id},
            {"kind", filtering::to_string(r.kind)},
            {"score", r.score},
            {"retained", r.retained},
            {"consensus_round", r.consensus_round}};
}

filtering::FilterRecord filter_record_from_json(const json& j) {
    filtering::FilterRecord r;
    r.round = j.at("round").get<int>();
    r.language = j.at("language").get<std::string>();
    r.sample_id = j.at("sample_id").get<int>();
    r.kind = filtering::filter_kind_from_string(j.at("kind").get<std::string>());
    r.score = j.at("score").get<double>();
    r.retained = j.at("retained").get<bool>();
    r.consensus_round = j.value("consensus_round", 0);
    return r;
}

JsonlFile read_jsonl(const fs::path& path, const std::string& expect_format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    JsonlFile out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": parse error: " + e.what());
        }
        if (lineno == 1) {
            if (!j.contains("format") || j.at("format") != expect_format)
                throw IoError(path.string() + ":1: expected a '" + expect_format + "' header");
            out.header = std::move(j);
        } else {
            out.records.push_back(std::move(j));
        }
    }
    if (out.header.is_null()) throw IoError(path.string() + ": empty file, missing header");
    return out;
}

// --- lock ----------------------------------------------------------------

DirLock::DirLock(const fs::path& dir) : path_(dir / ".congrad.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f)
        throw IoError("output directory is locked by " + path_.string() +
                      " (another instance running? remove the file if stale)");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
}

DirLock::~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

// --- gen-data -------------------------------------------------------------

void run_gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    DirLock lock(out_dir);
    auto targets = selfloop::generate_targets(cfg);
    std::ofstream out(out_dir / files::prompts);
    if (!out) throw IoError("cannot write " + (out_dir / files::prompts).string());
    json header = {{"format", "congrad-prompts"},
                   {"version", 1},
                   {"languages", cfg.languages},
                   {"prompts_per_language", cfg.prompts_per_language},
                   {"vocab_size", cfg.vocab_size},
                   {"max_len", cfg.max_len},
                   {"language_overlap", cfg.language_overlap},
                   {"master_seed", cfg.master_seed}};
    out << header.dump() << "\n";
    for (int li = 0; li < static_cast<int>(cfg.languages.size()); ++li) {
        for (int p = 0; p < cfg.prompts_per_language; ++p) {
            const int pid = li * cfg.prompts_per_language + p;
            const auto& target = targets.at({cfg.languages[li], pid});
            json rec = {{"language", cfg.languages[li]}, {"prompt_id", pid}, {"target", target}};
            out << rec.dump() << "\n";
        }
    }
    std::cout << "gen-data: wrote " << cfg.languages.size() * cfg.prompts_per_language
              << " prompt records to " << (out_dir / files::prompts).string() << "\n";
}

namespace {

std::map<std::pair<std::string, int>, std::vector<int>> load_targets(const fs::path& path,
                                                                     const ExperimentConfig& cfg) {
    if (!fs::exists(path))
        throw IoError("missing " + path.string() + "; run the gen-data subcommand first");
    JsonlFile f = read_jsonl(path, "congrad-prompts");
    const json& h = f.header;
    if (h.at("languages").get<std::vector<std::string>>() != cfg.languages ||
        h.at("prompts_per_language").get<int>() != cfg.prompts_per_language ||
        h.at("vocab_size").get<int>() != cfg.vocab_size ||
        h.at("max_len").get<int>() != cfg.max_len ||
        h.at("language_overlap").get<double>() != cfg.language_overlap ||
        h.at("master_seed").get<std::uint64_t>() != cfg.master_seed)
        throw ValidationError(path.string() +
                              " was generated with different settings; re-run gen-data");
    std::map<std::pair<std::string, int>, std::vector<int>> targets;
    for (const auto& r : f.records)
        targets.emplace(std::make_pair(r.at("language").get<std::string>(), r.at("prompt_id").get<int>()),
                        r.at("target").get<std::vector<int>>());
    const std::size_t expect =
        cfg.languages.size() * static_cast<std::size_t>(cfg.prompts_per_language);
    if (targets.size() != expect)
        throw IoError(path.string() + ": expected " + std::to_string(expect) + " records, found " +
                      std::to_string(targets.size()));
    return targets;
}

}  // namespace

// --- checkpoints ------------------------------------------------------------

void save_checkpoint(const fs::path& path, const selfloop::RoundState& state,
                     const ExperimentConfig& cfg) {
    json stores = json::object();
    for (const auto& [lang, store] : state.stores)
        stores[lang] = grad_store::store_to_json(store, cfg.ema);
    json datasets = json::object();
    for (const auto& [lang, list] : state.datasets) {
        json arr = json::array();
        for (const auto& p : list) arr.push_back(pair_to_json(p, 0));
        datasets[lang] = std::move(arr);
    }
    json j = {{"format", "congrad-checkpoint"},
              {"version", 1},
              {"completed_round", state.round - 1},
              {"round", state.round},
              {"policy", preference::policy_to_json(state.policy)},
              {"ref_policy", preference::policy_to_json(state.ref_policy)},
              {"datasets", std::move(datasets)},
              {"consensus_prev",
               state.consensus_prev ? consensus_to_json(*state.consensus_prev) : json(nullptr)},
              {"consensus_round", state.consensus_round},
              {"stores", std::move(stores)},
              {"rng_seed", state.rng_seed},
              {"config_core", matrixless_config_core(cfg)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << j.dump() << "\n";
}

selfloop::RoundState load_checkpoint(const fs::path& path, const ExperimentConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("checkpoint parse error in " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "congrad-checkpoint" || j.value("version", 0) != 1)
        throw IoError(path.string() + ": unrecognized checkpoint format/version");
    if (j.at("config_core") != matrixless_config_core(cfg))
        throw ValidationError(path.string() +
                              ": checkpoint was produced with a different configuration");
    selfloop::RoundState state;
    state.round = j.at("round").get<int>();
    state.policy = preference::policy_from_json(j.at("policy"));
    state.ref_policy = preference::policy_from_json(j.at("ref_policy"));
    for (const auto& [lang, arr] : j.at("datasets").items()) {
        auto& list = state.datasets[lang];
        for (const auto& pj : arr) list.push_back(pair_from_json(pj));
    }
    if (!j.at("consensus_prev").is_null())
        state.consensus_prev = consensus_from_json(j.at("consensus_prev"));
    state.consensus_round = j.at("consensus_round").get<int>();
    for (const auto& [lang, sj] : j.at("stores").items())
        state.stores.emplace(lang, grad_store::store_from_json(sj).first);
    state.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    return state;
}

int find_last_checkpoint_round(const fs::path& out_dir) {
    const fs::path dir = out_dir / files::checkpoints_dir;
    int best = 0;
    if (!fs::exists(dir)) return best;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        int round = 0;
        if (std::sscanf(name.c_str(), "round_%d.json", &round) == 1) best = std::max(best, round);
    }
    return best;
}

namespace {

std::string checkpoint_name(int round) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "round_%04d.json", round);
    return buf;
}

// Writes the per-round artifacts: preference data, filter and conflict
// reports, metrics, checkpoints and the manifest.
class TrainWriter : public selfloop::RoundSink {
public:
    TrainWriter(fs::path out, const ExperimentConfig& cfg, bool append)
        : out_(std::move(out)), cfg_(cfg) {
        fs::create_directories(out_ / files::checkpoints_dir);
        const auto mode = append ? std::ios::app : std::ios::trunc;
        pref_.open(out_ / files::preference_data, mode);
        filter_.open(out_ / files::filter_report, mode);
        conflict_.open(out_ / files::conflict_report, mode);
        metrics_.open(out_ / files::metrics, mode);
        if (!pref_ || !filter_ || !conflict_ || !metrics_)
            throw IoError("cannot open output files in " + out_.string());
        if (!append) {
            for (const auto& entry : fs::directory_iterator(out_ / files::checkpoints_dir))
                fs::remove(entry.path());
            pref_ << json{{"format", "congrad-preference-data"}, {"version", 1}}.dump() << "\n";
            filter_ << json{{"format", "congrad-filter-report"},
                            {"version", 1},
                            {"kind", filtering::to_string(cfg_.filter.kind)},
                            {"direction", filtering::to_string(cfg_.filter.direction)},
                            {"retain_fraction", cfg_.filter.retain_fraction}}
                           .dump()
                    << "\n";
            conflict_ << json{{"format", "congrad-conflict-report"}, {"version", 1}}.dump() << "\n";
            metrics_ << json{{"format", "congrad-metrics"},
                             {"version", 1},
                             {"kind", filtering::to_string(cfg_.filter.kind)},
                             {"direction", filtering::to_string(cfg_.filter.direction)},
                             {"retain_fraction", cfg_.filter.retain_fraction}}
                            .dump()
                     << "\n";
            write_manifest(0);
        }
    }

    void on_round(const selfloop::RoundState& next_state, const selfloop::RoundReport& report,
                  const std::vector<selfloop::MetricsRecord>& metrics) override {
        for (const auto& [lang, list] : report.pairs)
            for (const auto& p : list) pref_ << pair_to_json(p, report.round).dump() << "\n";
        for (const auto& rec : report.filter_records)
            filter_ << filter_record_to_json(rec).dump() << "\n";
        for (const auto& c : report.conflicts) {
            json j = {{"type", "pair"},      {"round", report.round}, {"language", c.language},
                      {"other", c.other},    {"cosine", c.cosine},    {"projected", c.projected},
                      {"skipped_degenerate", c.skipped_degenerate}};
            conflict_ << j.dump() << "\n";
        }
        json steps = json::object();
        for (const auto& [lang, store] : next_state.stores) steps[lang] = store.step;
        conflict_ << json{{"type", "summary"},
                          {"round", report.round},
                          {"conflicts_resolved", report.consensus_conflicts},
                          {"store_steps", std::move(steps)}}
                         .dump()
                  << "\n";
        for (const auto& m : metrics) metrics_ << metrics_to_json(m).dump() << "\n";
        pref_.flush();
        filter_.flush();
        conflict_.flush();
        metrics_.flush();
        save_checkpoint(out_ / files::checkpoints_dir / checkpoint_name(report.round), next_state,
                        cfg_);
        write_manifest(report.round);
        for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    }

private:
    void write_manifest(int completed) {
        json j = {{"format", "congrad-manifest"},
                  {"version", 1},
                  {"status", completed >= cfg_.rounds ? "complete" : "partial"},
                  {"rounds_completed", completed},
                  {"rounds_total", cfg_.rounds},
                  {"arm",
                   {{"kind", filtering::to_string(cfg_.filter.kind)},
                    {"direction", filtering::to_string(cfg_.filter.direction)},
                    {"retain_fraction", cfg_.filter.retain_fraction}}},
                  {"files",
                   {files::prompts, files::preference_data, files::filter_report,
                    files::conflict_report, files::metrics}}};
        std::ofstream out(out_ / files::manifest);
        if (!out) throw IoError("cannot write manifest");
        out << j.dump(2) << "\n";
    }

    fs::path out_;
    ExperimentConfig cfg_;
    std::ofstream pref_, filter_, conflict_, metrics_;
};

}  // namespace

void run_train(const ExperimentConfig& cfg0, bool resume) {
    ExperimentConfig cfg = with_derived_seeds(cfg0);
    cfg.validate();
    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    DirLock lock(out_dir);
    auto targets = load_targets(out_dir / files::prompts, cfg);
    auto ctx = selfloop::make_context(cfg, std::move(targets));

    selfloop::RoundState state;
    int first_round = 1;
    if (resume) {
        const int completed = find_last_checkpoint_round(out_dir);
        if (completed < 1)
            throw IoError("--resume: no checkpoints found under " + out_dir.string());
        state = load_checkpoint(out_dir / files::checkpoints_dir / checkpoint_name(completed), cfg);
        first_round = state.round;
        if (first_round > cfg.rounds) {
            std::cout << "train: all " << cfg.rounds << " rounds already complete\n";
            return;
        }
    } else {
        state = selfloop::initial_state(cfg, ctx);
    }

    TrainWriter writer(out_dir, cfg, resume);
    selfloop::run_rounds(cfg, ctx, std::move(state), first_round, &writer);
    std::cout << "train: completed rounds " << first_round << ".." << cfg.rounds << " in "
              << out_dir.string() << "\n";
}

// --- filter-analyze -----------------------------------------------------

namespace {

json histogram_json(const std::vector<double>& scores, bool is_cosine) {
    double lo = is_cosine ? -1.0 : *std::min_element(scores.begin(), scores.end());
    double hi = is_cosine ? 1.0 : *std::max_element(scores.begin(), scores.end());
    if (hi <= lo) hi = lo + 1.0;
    const int nbins = is_cosine ? 20 : 10;
    std::vector<int> counts(nbins, 0);
    for (double s : scores) {
        int b = static_cast<int>((s - lo) / (hi - lo) * nbins);
        b = std::clamp(b, 0, nbins - 1);
        ++counts[b];
    }
    return {{"lo", lo}, {"hi", hi}, {"counts", counts}};
}

}  // namespace

void run_filter_analyze(const fs::path& report_path, const std::vector<double>& rhos,
                        const std::vector<fs::path>& metrics_paths, const fs::path& out_dir,
                        const fs::path& conflict_path) {
    JsonlFile f = read_jsonl(report_path, "congrad-filter-report");
    const auto kind = filtering::filter_kind_from_string(f.header.at("kind").get<std::string>());
    const auto direction =
        filtering::direction_from_string(f.header.at("direction").get<std::string>());
    const double run_rho = f.header.at("retain_fraction").get<double>();

    std::vector<filtering::FilterRecord> records;
    records.reserve(f.records.size());
    for (const auto& rj : f.records) records.push_back(filter_record_from_json(rj));

    // round → language → records
    std::map<int, std::map<std::string, std::vector<const filtering::FilterRecord*>>> grouped;
    for (const auto& r : records) grouped[r.round][r.language].push_back(&r);

    json rounds = json::array();
    for (const auto& [round, langs] : grouped) {
        json jlangs = json::object();
        for (const auto& [lang, recs] : langs) {
            std::vector<double> scores;
            int retained = 0;
            for (const auto* r : recs) {
                scores.push_back(r->score);
                if (r->retained) ++retained;
            }
            double mean = 0.0;
            for (double s : scores) mean += s;
            mean /= static_cast<double>(scores.size());
            jlangs[lang] = {{"count", scores.size()},
                            {"retained", retained},
                            {"quota", static_cast<int>(std::ceil(run_rho * scores.size()))},
                            {"mean_score", mean},
                            {"min_score", *std::min_element(scores.begin(), scores.end())},
                            {"max_score", *std::max_element(scores.begin(), scores.end())},
                            {"histogram",
                             histogram_json(scores, kind == filtering::FilterKind::congrad)}};
        }
        rounds.push_back({{"round", round}, {"languages", std::move(jlangs)}});
    }

    // Offline ρ sweep: re-select from the recorded scores.
    json sweep = json::array();
    for (double rho : rhos) {
        filtering::FilterConfig fc;
        fc.retain_fraction = rho;
        fc.direction = direction;
        fc.kind = kind;
        json jrounds = json::array();
        for (const auto& [round, langs] : grouped) {
            std::vector<filtering::FilterScore> scores;
            for (const auto& [lang, recs] : langs)
                for (const auto* r : recs)
                    scores.push_back({r->sample_id, lang, r->score, r->kind});
            auto retained = filtering::select(scores, fc);
            json jlangs = json::object();
            for (const auto& [lang, ids] : retained)
                jlangs[lang] = {{"retained", ids.size()}, {"ids", ids}};
            jrounds.push_back({{"round", round}, {"languages", std::move(jlangs)}});
        }
        sweep.push_back({{"rho", rho}, {"rounds", std::move(jrounds)}});
    }

    // Per-round conflict summaries from the conflict report, when given.
    json conflict_summary = json::array();
    if (!conflict_path.empty()) {
        JsonlFile cf = read_jsonl(conflict_path, "congrad-conflict-report");
        std::map<int, std::tuple<int, int, double, int>> per_round;  // checked, projected, cos, degenerate
        std::map<int, json> steps;
        for (const auto& rj : cf.records) {
            const int round = rj.at("round").get<int>();
            if (rj.at("type") == "summary") {
                steps[round] = rj.at("store_steps");
                continue;
            }
            auto& [checked, projected, cos_sum, degenerate] = per_round[round];
            ++checked;
            if (rj.at("projected").get<bool>()) ++projected;
            if (rj.value("skipped_degenerate", false)) ++degenerate;
            cos_sum += rj.at("cosine").get<double>();
        }
        for (const auto& [round, agg] : per_round) {
            const auto& [checked, projected, cos_sum, degenerate] = agg;
            json entry = {{"round", round},
                          {"pairs_checked", checked},
                          {"projected", projected},
                          {"skipped_degenerate", degenerate},
                          {"mean_cosine", checked > 0 ? cos_sum / checked : 0.0}};
            if (steps.count(round)) entry["store_steps"] = steps.at(round);
            conflict_summary.push_back(std::move(entry));
        }
    }

    // Final-round losses from any provided metrics files.
    json final_losses = json::array();
    for (const auto& mp : metrics_paths) {
        JsonlFile mf = read_jsonl(mp, "congrad-metrics");
        int last_round = 0;
        for (const auto& rj : mf.records) last_round = std::max(last_round, rj.at("round").get<int>());
        json per_lang = json::object();
        double sum = 0.0;
        int n = 0;
        for (const auto& rj : mf.records) {
            if (rj.at("round").get<int>() != last_round) continue;
            const double loss = rj.at("mean_lp_dpo_loss").get<double>();
            per_lang[rj.at("language").get<std::string>()] = loss;
            sum += loss;
            ++n;
        }
        final_losses.push_back({{"metrics", mp.string()},
                                {"arm",
                                 {{"kind", mf.header.value("kind", "?")},
                                  {"direction", mf.header.value("direction", "?")},
                                  {"retain_fraction", mf.header.value("retain_fraction", 0.0)}}},
                                {"round", last_round},
                                {"per_language", std::move(per_lang)},
                                {"mean_final_loss", n > 0 ? sum / n : 0.0}});
    }

    json summary = {{"format", "congrad-filter-summary"},
                    {"version", 1},
                    {"arm",
                     {{"kind", filtering::to_string(kind)},
                      {"direction", filtering::to_string(direction)},
                      {"retain_fraction", run_rho}}},
                    {"rounds", std::move(rounds)},
                    {"sweep", std::move(sweep)},
                    {"conflicts", std::move(conflict_summary)},
                    {"final_losses", std::move(final_losses)}};
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / files::filter_summary);
    if (!out) throw IoError("cannot write filter summary");
    out << summary.dump(2) << "\n";

    std::cout << "filter-analyze: " << records.size() << " records, "
              << summary.at("rounds").size() << " rounds";
    if (!rhos.empty()) std::cout << ", swept " << rhos.size() << " retention fractions";
    std::cout << "; wrote " << (out_dir / files::filter_summary).string() << "\n";
}

// --- report ----------------------------------------------------------------

void run_report(const std::vector<fs::path>& metrics_paths, const fs::path& out_dir) {
    if (metrics_paths.empty()) throw ValidationError("report: at least one metrics file required");

    struct Arm {
        std::string label;
        // round → (mean accuracy, mean loss) over languages
        std::map<int, std::pair<double, double>> by_round;
        std::vector<selfloop::MetricsRecord> records;
    };
    std::vector<Arm> arms;
    int max_round = 0;
    for (const auto& mp : metrics_paths) {
        JsonlFile mf = read_jsonl(mp, "congrad-metrics");
        Arm arm;
        arm.label = mf.header.value("kind", "?") + "/" + mf.header.value("direction", "?");
        std::map<int, std::vector<selfloop::MetricsRecord>> per_round;
        for (const auto& rj : mf.records) {
            auto rec = metrics_from_json(rj);
            per_round[rec.round].push_back(rec);
            arm.records.push_back(std::move(rec));
        }
        for (const auto& [round, recs] : per_round) {
            double acc = 0.0, loss = 0.0;
            for (const auto& r : recs) {
                acc += r.preference_accuracy;
                loss += r.mean_lp_dpo_loss;
            }
            arm.by_round[round] = {acc / recs.size(), loss / recs.size()};
            max_round = std::max(max_round, round);
        }
        arms.push_back(std::move(arm));
    }

    fs::create_directories(out_dir);
    std::ostringstream text;
    bool any = false;
    for (const auto& a : arms) any = any || !a.records.empty();
    if (!any) {
        text << "empty report: no metrics records found\n";
    } else {
        auto table = [&](const std::string& title, auto getter) {
            text << title << "\n";
            text << "arm";
            for (int r = 1; r <= max_round; ++r) text << "\tround " << r;
            text << "\n";
            for (const auto& a : arms) {
                text << a.label;
                for (int r = 1; r <= max_round; ++r) {
                    auto it = a.by_round.find(r);
                    text << "\t" << (it == a.by_round.end() ? "-" : fmt_double(getter(it->second)));
                }
                text << "\n";
            }
            text << "\n";
        };
        table("mean held-out LP-DPO loss (lower is better)",
              [](const std::pair<double, double>& p) { return p.second; });
        table("mean held-out preference accuracy",
              [](const std::pair<double, double>& p) { return p.first; });
    }
    {
        std::ofstream out(out_dir / files::report_text);
        if (!out) throw IoError("cannot write report");
        out << text.str();
    }
    {
        std::ofstream csv(out_dir / files::report_series);
        if (!csv) throw IoError("cannot write report series");
        csv << "arm,round,language,preference_accuracy,mean_lp_dpo_loss,retained_count,"
               "conflict_count,mean_congrad_score\n";
        for (const auto& a : arms)
            for (const auto& r : a.records) {
                csv << a.label << "," << r.round << "," << r.language << ","
                    << fmt_double(r.preference_accuracy) << "," << fmt_double(r.mean_lp_dpo_loss)
                    << "," << r.retained_count << "," << r.conflict_count << ",";
                if (r.mean_congrad_score) csv << fmt_double(*r.mean_congrad_score);
                csv << "\n";
            }
    }
    std::cout << text.str();
}

}  // namespace congrad::harness
