#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "congrad/linalg.hpp"

namespace congrad::lowrank {

// Rank-r factor pair approximating a gradient matrix as P·Qᵀ.
struct LowRankFactors {
    DenseMatrix p;  // n × r
    DenseMatrix q;  // m × r
    int rank = 0;
};

// Subspace iteration at fixed rank:
//   Q ~ N(0,1) (m × r), then `iters` rounds of
//     P ← orth(M·Q),  Q ← orth(Mᵀ·P)
//   and a final P ← M·Q.
// Because Q ends orthonormal, reconstruct() returns M projected onto
// span(Q), which approaches the best rank-r approximation of M and is exact
// whenever rank(M) ≤ r. Deterministic for a given seed.
LowRankFactors power_iterate(const DenseMatrix& m, int rank, int iters, std::uint64_t seed);

// P·Qᵀ, shape n × m.
DenseMatrix reconstruct(const LowRankFactors& f);

// Cosine similarity of flattened gradients, clamped to [-1, 1]. A vector
// whose norm falls below 1e-12 is degenerate: the result is 0 and
// *degenerate is set, so a dead gradient ranks last under similarity
// filtering instead of raising an error.
double cosine_flat(const FlatVector& a, const FlatVector& b, bool* degenerate = nullptr);

// Row-major concatenation in registration order; length = Σ rows·cols.
FlatVector flatten_concat(const std::vector<DenseMatrix>& matrices);

// Inverse of flatten_concat given the registered shape list.
std::vector<DenseMatrix> split_flat(const FlatVector& v,
                                    const std::vector<std::pair<int, int>>& shapes);

}  // namespace congrad::lowrank
