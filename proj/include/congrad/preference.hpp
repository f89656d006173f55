#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "congrad/linalg.hpp"

namespace congrad::preference {

// Categorical sequence model standing in for the LLM: a prompt-conditioned
// first-token logit table plus a shared bigram transition table. Small
// enough that log-probabilities and loss gradients are exact, while still
// giving different "languages" genuinely different gradient geometry when
// their preferred token regions differ.
//
// Parameter registration order (fixed, used for all flattening):
//   slot 0: first_logits  (num_prompts × V)
//   slot 1: trans_logits  (V × V)
struct ToyPolicy {
    int vocab_size = 0;
    int max_len = 0;
    DenseMatrix first_logits;
    DenseMatrix trans_logits;

    int num_prompts() const { return first_logits.rows; }
    std::vector<std::pair<int, int>> param_shapes() const {
        return {{first_logits.rows, first_logits.cols}, {trans_logits.rows, trans_logits.cols}};
    }
    std::size_t param_count() const { return first_logits.size() + trans_logits.size(); }
};

// Zero-initialized (uniform) policy.
ToyPolicy make_policy(int num_prompts, int vocab_size, int max_len);

struct PreferencePair {
    std::string language;
    int prompt_id = 0;
    std::vector<int> chosen;    // y_w
    std::vector<int> rejected;  // y_l
    int chosen_score = 0;
    int rejected_score = 0;
};

struct DpoConfig {
    double beta = 0.5;   // preference margin scale, > 0
    double alpha = 0.01; // length-penalty strength, >= 0

    void validate() const;
};

// Sum of log-softmax first-token logit and log-softmax bigram logits along
// the sequence. Always <= 0.
double log_prob(const ToyPolicy& policy, int prompt_id, const std::vector<int>& sequence);

// -log σ(β·p_m) with p_m the policy-vs-reference log-ratio margin between
// chosen and rejected. Identical to lp_dpo_loss at α = 0.
double dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const PreferencePair& pair,
                const DpoConfig& cfg);

// -log σ(β·p_m + α·l_m), where l_m = |y_w| − |y_l| in tokens.
double lp_dpo_loss(const ToyPolicy& policy, const ToyPolicy& ref, const PreferencePair& pair,
                   const DpoConfig& cfg);

// Exact analytic gradient of lp_dpo_loss w.r.t. the policy parameters,
// flattened in registration order.
FlatVector sample_gradient(const ToyPolicy& policy, const ToyPolicy& ref,
                           const PreferencePair& pair, const DpoConfig& cfg);

// Mean of per-sample gradients. Sample gradients are computed in parallel;
// the sum is taken in sample order so results are thread-count independent.
FlatVector minibatch_gradient(const ToyPolicy& policy, const ToyPolicy& ref,
                              const std::vector<PreferencePair>& pairs, const DpoConfig& cfg);

// (1/|L|)·Σ_l mean LP-DPO loss over each language's dataset. Empty language
// datasets are excluded; all-empty input is invalid.
double joint_loss(const ToyPolicy& policy, const ToyPolicy& ref,
                  const std::map<std::string, std::vector<PreferencePair>>& datasets,
                  const DpoConfig& cfg);

// params ← params − lr·grad; returns a new policy value.
ToyPolicy sgd_step(const ToyPolicy& policy, const FlatVector& grad, double lr);

// Versioned policy checkpoint, round-trip exact.
nlohmann::json policy_to_json(const ToyPolicy& policy);
ToyPolicy policy_from_json(const nlohmann::json& j);
void save_policy(const ToyPolicy& policy, const std::string& path);
ToyPolicy load_policy(const std::string& path);

}  // namespace congrad::preference
