#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "congrad/errors.hpp"
#include "congrad/rng.hpp"

namespace congrad {

// Row-major dense matrix of doubles. All numerics in the project are 64-bit.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c) {
        if (r <= 0 || c <= 0) throw InvalidInputError("DenseMatrix: dimensions must be positive");
        data.assign(static_cast<std::size_t>(r) * c, 0.0);
    }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Whole-model gradient: parameter matrices flattened row-major and
// concatenated in registration order. The registration order is fixed at
// policy construction; vectors compared within one run always share it.
using FlatVector = std::vector<double>;

bool all_finite(const DenseMatrix& m);
bool all_finite(const FlatVector& v);

DenseMatrix random_normal(int rows, int cols, rng::Rng& rng);

namespace linalg {

// Plain reference kernels, no threading. Kept as the ground truth the OpenMP
// kernels are tested against (bitwise for the matmuls, see tests) and as the
// baseline for the kernel benchmark.
namespace serial {
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);     // A·B
DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b);  // Aᵀ·B
DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b);  // A·Bᵀ
double dot(const FlatVector& a, const FlatVector& b);
void axpby(double alpha, const DenseMatrix& x, double beta, DenseMatrix& y);  // y = αx + βy
}  // namespace serial

// OpenMP kernels. Work is split across independent output elements and the
// per-element summation order matches the serial kernels, so matmul results
// are bitwise identical for any thread count. dot() uses a fixed chunk
// decomposition (chunk partials combined in index order), which makes it
// deterministic for any thread count as well.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b);
double dot(const FlatVector& a, const FlatVector& b);
void axpby(double alpha, const DenseMatrix& x, double beta, DenseMatrix& y);

double sqnorm(const FlatVector& a);
double norm(const FlatVector& a);
double frob_norm(const DenseMatrix& m);
double frob_dist(const DenseMatrix& a, const DenseMatrix& b);

// In-place modified Gram-Schmidt on the columns of m. A column whose
// residual norm falls below 1e-10 is replaced by a fresh draw from rng and
// re-orthogonalized, so rank-deficient inputs still produce a full
// orthonormal basis instead of NaN columns.
void orthonormalize_columns(DenseMatrix& m, rng::Rng& rng);

}  // namespace linalg
}  // namespace congrad
