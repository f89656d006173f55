#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "congrad/linalg.hpp"

namespace congrad::consensus {

// Per-language EMA snapshots, all in the same flattened parameter space.
struct TaskGradients {
    std::map<std::string, FlatVector> per_language;
};

// Sum of the de-conflicted per-language gradients, plus conflict metadata.
struct ConsensusGradient {
    FlatVector vector;
    int conflicts_resolved = 0;
    int language_count = 0;
};

// One pairwise conflict check, for the conflict report.
struct ConflictRecord {
    std::string language;        // whose candidate gradient was being cleaned
    std::string other;           // gradient projected against
    double cosine = 0.0;         // cosine at the time of the check
    bool projected = false;      // dot < 0, projection applied
    bool skipped_degenerate = false;  // other had norm < 1e-12
};

// Single sweep over `others` in the given order: whenever the running vector
// conflicts with an original other-gradient (dot < 0), project it onto that
// gradient's normal plane:
//   g ← g − (g·G' / ‖G'‖²)·G'
// Others with norm below 1e-12 are skipped (projection undefined) and
// recorded as such.
FlatVector deconflict_one(const FlatVector& g, const std::vector<FlatVector>& others,
                          std::vector<ConflictRecord>* log = nullptr,
                          int* projections = nullptr);

// For each language, de-conflict its gradient against the others (shuffled
// per language with a generator derived from order_seed, matching the
// original gradient-surgery convention) and sum the results. With a single
// language the gradient is returned verbatim with zero conflicts.
ConsensusGradient consensus(const TaskGradients& tasks, std::uint64_t order_seed,
                            std::vector<ConflictRecord>* log = nullptr);

}  // namespace congrad::consensus
