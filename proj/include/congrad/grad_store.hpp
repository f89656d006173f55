#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "congrad/lowrank.hpp"

namespace congrad::grad_store {

struct EmaConfig {
    double gamma = 0.9;  // EMA decay factor, in (0, 1)
    int rank = 64;
    int power_iters = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

// One registered parameter's EMA slot. 2-D matrices are kept as rank-r
// factors; vector-shaped parameters (a single row or column) are kept dense
// and updated exactly. The effective rank is min(rank, rows, cols), so
// small matrices degrade gracefully to lossless storage.
struct ParamSlot {
    bool compressed = true;
    lowrank::LowRankFactors factors;  // when compressed
    DenseMatrix dense;                // when !compressed
};

// Per-language EMA of minibatch gradients. The EMA starts at zero (zero
// factors) and no bias correction is applied. Single writer per store;
// distinct languages may be updated in parallel.
struct LanguageGradientStore {
    std::string language;
    std::vector<std::pair<int, int>> shapes;  // registered parameter shapes
    std::vector<ParamSlot> slots;
    long step = 0;  // τ, number of updates applied
};

LanguageGradientStore make_store(std::string language,
                                 const std::vector<std::pair<int, int>>& shapes,
                                 const EmaConfig& cfg);

// Decompress-update-recompress. For each parameter matrix, one at a time:
// reconstruct the previous EMA, apply G ← γ·G + (1−γ)·g in dense space, and
// recompress with power iteration. At most one parameter matrix is held
// dense at any instant (see dense_stats), beyond the incoming gradient.
// A non-finite or mis-shaped gradient is rejected with the store unchanged.
LanguageGradientStore ema_update(const LanguageGradientStore& store,
                                 const std::vector<DenseMatrix>& minibatch_grad,
                                 const EmaConfig& cfg);

// flatten_concat of the reconstructed per-matrix EMA gradients.
FlatVector snapshot(const LanguageGradientStore& store);

// Instrumentation for the memory contract: peak number of simultaneously
// materialized dense parameter-sized matrices inside ema_update. Tests pin
// peak ≤ 2 (the reconstruction plus the incoming gradient).
struct DenseMatStats {
    int current = 0;
    int peak = 0;
    void reset();
};
DenseMatStats& dense_stats();

// Versioned checkpoint of factors, step counter and config; round-trip
// exact (doubles survive JSON serialization bit-for-bit).
nlohmann::json store_to_json(const LanguageGradientStore& store, const EmaConfig& cfg);
std::pair<LanguageGradientStore, EmaConfig> store_from_json(const nlohmann::json& j);
void save_store(const LanguageGradientStore& store, const EmaConfig& cfg, const std::string& path);
std::pair<LanguageGradientStore, EmaConfig> load_store(const std::string& path);

}  // namespace congrad::grad_store
