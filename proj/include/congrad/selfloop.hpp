#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "congrad/config.hpp"
#include "congrad/consensus.hpp"
#include "congrad/filtering.hpp"
#include "congrad/grad_store.hpp"
#include "congrad/preference.hpp"

namespace congrad::selfloop {

using preference::PreferencePair;
using preference::ToyPolicy;

// Scripted stand-in for an LLM judge. Scores are integers in [0, 5]:
// 5 × (positional overlap with the prompt's hidden target sequence), rounded,
// plus seeded integer noise in {-1, 0, 1}, clamped. The noise is keyed by the
// response content, so identical responses always receive identical scores
// and a constructed pair can never have chosen == rejected.
struct JudgeModel {
    std::map<std::pair<std::string, int>, std::vector<int>> targets;
    double noise_std = 0.0;
    std::uint64_t seed = 0;

    int score(const std::string& language, int prompt_id, const std::vector<int>& response) const;
};

// State carried between self-rewarding rounds. ref_policy is the frozen
// policy from the current round's start; consensus_prev holds the consensus
// gradient computed from round consensus_round's EMA stores (present from
// round 2 on).
struct RoundState {
    int round = 1;  // t
    ToyPolicy policy;
    ToyPolicy ref_policy;
    std::map<std::string, std::vector<PreferencePair>> datasets;
    std::optional<consensus::ConsensusGradient> consensus_prev;
    int consensus_round = 0;
    std::map<std::string, grad_store::LanguageGradientStore> stores;
    std::uint64_t rng_seed = 0;
};

// Per-round diagnostics emitted alongside the new state.
struct LanguageRoundStats {
    int pair_count = 0;
    int retained_count = 0;
    int batches = 0;
    long store_steps = 0;
    int conflict_count = 0;                     // projections applied to this language
    std::optional<double> mean_congrad_score;   // absent in round 1
    double mean_train_loss = 0.0;               // post-epoch LP-DPO over the trained pairs
};

struct RoundReport {
    int round = 0;
    std::map<std::string, LanguageRoundStats> per_language;
    std::map<std::string, std::vector<PreferencePair>> pairs;  // generated this round
    std::vector<filtering::FilterRecord> filter_records;       // empty in round 1
    std::vector<consensus::ConflictRecord> conflicts;
    int consensus_conflicts = 0;
    std::vector<std::string> warnings;
};

// k ancestral samples of length max_len from the policy; deterministic for a
// given seed.
std::vector<std::vector<int>> generate_candidates(const ToyPolicy& policy, int prompt_id, int k,
                                                  std::uint64_t seed);

// Pair of (argmax score, argmin score) candidates, ties broken by lowest
// index; nullopt when max == min (discard-ties rule).
std::optional<PreferencePair> build_pair(const std::string& language, int prompt_id,
                                         const std::vector<std::vector<int>>& candidates,
                                         const std::vector<int>& scores);

// One self-rewarding round:
//   1. generate and judge k candidates per prompt, build preference pairs;
//   2. round 1 trains on all pairs; round t >= 2 scores each pair against
//      consensus_prev (or the configured baseline) and trains on the
//      retained subset;
//   3. one epoch of LP-DPO gradient descent over per-language minibatches,
//      each minibatch gradient feeding that language's EMA store;
//   4. consensus of the round's EMA snapshots, stored for the next round.
// Returns the state for round t+1 (ref_policy reset to its starting policy).
std::pair<RoundState, RoundReport> run_round(const RoundState& state,
                                             const harness::ExperimentConfig& cfg,
                                             const JudgeModel& judge);

struct MetricsRecord {
    int round = 0;
    std::string language;
    double preference_accuracy = 0.0;  // held-out pairs with positive policy margin
    double mean_lp_dpo_loss = 0.0;     // held-out LP-DPO vs the initial policy
    int retained_count = 0;
    int conflict_count = 0;
    std::optional<double> mean_congrad_score;
};

// Built once per experiment; everything is a pure function of the config.
struct ExperimentContext {
    JudgeModel judge;
    ToyPolicy initial_policy;
    std::map<std::string, std::vector<PreferencePair>> heldout;
};

// Synthetic per-(language, prompt) target sequences: language j draws its
// targets from a token region of width ~V/|L| whose position interpolates
// from fully shared (overlap 1) to disjoint (overlap 0).
std::map<std::pair<std::string, int>, std::vector<int>> generate_targets(
    const harness::ExperimentConfig& cfg);

ExperimentContext make_context(const harness::ExperimentConfig& cfg);
ExperimentContext make_context(const harness::ExperimentConfig& cfg,
                               std::map<std::pair<std::string, int>, std::vector<int>> targets);

RoundState initial_state(const harness::ExperimentConfig& cfg, const ExperimentContext& ctx);

// Held-out evaluation of a post-round policy.
std::vector<MetricsRecord> evaluate_round(const ToyPolicy& policy,
                                          const harness::ExperimentConfig& cfg,
                                          const ExperimentContext& ctx, const RoundReport& report);

// Observer invoked after every completed round (file writers, collectors).
struct RoundSink {
    virtual ~RoundSink() = default;
    virtual void on_round(const RoundState& next_state, const RoundReport& report,
                          const std::vector<MetricsRecord>& metrics) = 0;
};

struct ExperimentReport {
    std::vector<MetricsRecord> metrics;
    std::vector<RoundReport> rounds;
    RoundState final_state;
};

// Drives T rounds from a fresh (or resumed) state. Fully deterministic given
// the config: two runs produce identical reports.
ExperimentReport run_experiment(const harness::ExperimentConfig& cfg, RoundSink* sink = nullptr);
ExperimentReport run_rounds(const harness::ExperimentConfig& cfg, const ExperimentContext& ctx,
                            RoundState state, int first_round, RoundSink* sink = nullptr);

}  // namespace congrad::selfloop
