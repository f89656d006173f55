#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "congrad/filtering.hpp"
#include "congrad/grad_store.hpp"
#include "congrad/preference.hpp"

namespace congrad::harness {

// Full experiment configuration. Defaults follow the project's standard
// small-scale setup: rank-64 compression with 3 power iterations, batch 16,
// k = 4 candidates per prompt, top-50% retention.
//
// All randomness in a run is derived from master_seed:
//   targets      derive(master, "targets", lang_idx, prompt)
//   ema          derive(master, "ema") → per (language, slot) inside the store
//   filter/rand  derive(master, "filter") → per (language, sample)
//   judge        derive(master, "judge") → per (language, prompt, response hash)
//   generation   derive(master, "round", t, "gen", lang, prompt, candidate)
//   shuffling    derive(master, "round", t, "shuffle", lang)
//   order        derive(master, "round", t, "order")
//   held-out     derive(master, "heldout", lang, prompt, candidate)
struct ExperimentConfig {
    std::vector<std::string> languages;
    int prompts_per_language = 100;
    int rounds = 5;                // T
    int candidates_per_prompt = 4; // k
    int vocab_size = 16;
    int max_len = 8;
    // Overlap of per-language preferred token regions: 1 → all languages
    // share one region (positive transfer), 0 → disjoint regions (maximal
    // cross-language gradient conflict).
    double language_overlap = 0.5;
    double judge_noise_std = 0.5;
    grad_store::EmaConfig ema;
    preference::DpoConfig dpo;
    filtering::FilterConfig filter;
    double learning_rate = 1e-2;
    int batch_size = 16;
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";

    int num_prompts_total() const {
        return static_cast<int>(languages.size()) * prompts_per_language;
    }
    void validate() const;
};

}  // namespace congrad::harness
