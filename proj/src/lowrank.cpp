#include "congrad/lowrank.hpp"

#include <algorithm>
#include <cmath>

namespace congrad::lowrank {

LowRankFactors power_iterate(const DenseMatrix& m, int rank, int iters, std::uint64_t seed) {
    if (m.rows <= 0 || m.cols <= 0) throw InvalidInputError("power_iterate: empty matrix");
    if (rank < 1 || rank > std::min(m.rows, m.cols))
        throw InvalidRankError("power_iterate: rank must be in [1, min(rows, cols)]");
    if (iters < 1) throw InvalidInputError("power_iterate: iters must be >= 1");
    if (!all_finite(m)) throw InvalidInputError("power_iterate: non-finite entries");

    rng::Rng rng(seed);
    DenseMatrix q = random_normal(m.cols, rank, rng);
    DenseMatrix p(m.rows, rank);
    for (int it = 0; it < iters; ++it) {
        p = linalg::matmul(m, q);
        linalg::orthonormalize_columns(p, rng);
        q = linalg::matmul_ta(m, p);
        linalg::orthonormalize_columns(q, rng);
    }
    p = linalg::matmul(m, q);
    return LowRankFactors{std::move(p), std::move(q), rank};
}

DenseMatrix reconstruct(const LowRankFactors& f) {
    if (f.p.cols != f.rank || f.q.cols != f.rank)
        throw InvalidInputError("reconstruct: factor columns do not match rank");
    return linalg::matmul_tb(f.p, f.q);
}

double cosine_flat(const FlatVector& a, const FlatVector& b, bool* degenerate) {
    if (a.size() != b.size()) throw InvalidInputError("cosine_flat: length mismatch");
    if (a.empty()) throw InvalidInputError("cosine_flat: empty vectors");
    if (degenerate) *degenerate = false;
    const double na = linalg::norm(a);
    const double nb = linalg::norm(b);
    if (na < 1e-12 || nb < 1e-12) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    const double c = linalg::dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

FlatVector flatten_concat(const std::vector<DenseMatrix>& matrices) {
    if (matrices.empty()) throw InvalidInputError("flatten_concat: empty matrix list");
    std::size_t total = 0;
    for (const auto& m : matrices) total += m.size();
    FlatVector out;
    out.reserve(total);
    for (const auto& m : matrices) out.insert(out.end(), m.data.begin(), m.data.end());
    return out;
}

std::vector<DenseMatrix> split_flat(const FlatVector& v,
                                    const std::vector<std::pair<int, int>>& shapes) {
    std::size_t total = 0;
    for (auto [r, c] : shapes) total += static_cast<std::size_t>(r) * c;
    if (total != v.size()) throw InvalidInputError("split_flat: length does not match shapes");
    std::vector<DenseMatrix> out;
    out.reserve(shapes.size());
    std::size_t off = 0;
    for (auto [r, c] : shapes) {
        DenseMatrix m(r, c);
        std::copy(v.begin() + off, v.begin() + off + m.size(), m.data.begin());
        off += m.size();
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace congrad::lowrank
