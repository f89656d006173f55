#include "congrad/linalg.hpp"

#include <cmath>

namespace congrad {

bool all_finite(const DenseMatrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const FlatVector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

DenseMatrix random_normal(int rows, int cols, rng::Rng& rng) {
    DenseMatrix m(rows, cols);
    for (double& x : m.data) x = rng.normal();
    return m;
}

namespace linalg {

namespace {

void check_inner(int a, int b, const char* what) {
    if (a != b) throw InvalidInputError(std::string(what) + ": inner dimensions do not match");
}

// Per-output-slice kernels shared in spirit by the serial and parallel entry
// points: each output element accumulates in the same operand order, and the
// build disables FP contraction, so the two paths agree bitwise.

inline void matmul_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c, int i) {
    const double* arow = &a.data[static_cast<std::size_t>(i) * a.cols];
    double* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
    for (int k = 0; k < a.cols; ++k) {
        const double aik = arow[k];
        const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
        for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
}

inline void matmul_ta_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c, int j) {
    // Output row j of AᵀB accumulates column j of A against the rows of B.
    double* crow = &c.data[static_cast<std::size_t>(j) * c.cols];
    for (int i = 0; i < a.rows; ++i) {
        const double aij = a.data[static_cast<std::size_t>(i) * a.cols + j];
        const double* brow = &b.data[static_cast<std::size_t>(i) * b.cols];
        for (int l = 0; l < b.cols; ++l) crow[l] += aij * brow[l];
    }
}

inline void matmul_tb_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c, int i) {
    const double* arow = &a.data[static_cast<std::size_t>(i) * a.cols];
    double* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
    for (int j = 0; j < b.rows; ++j) {
        const double* brow = &b.data[static_cast<std::size_t>(j) * b.cols];
        double s = 0.0;
        for (int l = 0; l < a.cols; ++l) s += arow[l] * brow[l];
        crow[j] = s;
    }
}

constexpr std::size_t kDotChunk = 8192;

inline double dot_chunk(const double* a, const double* b, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

namespace serial {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.cols, b.rows, "matmul");
    DenseMatrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.rows, b.rows, "matmul_ta");
    DenseMatrix c(a.cols, b.cols);
    for (int j = 0; j < a.cols; ++j)
        for (int l = 0; l < b.cols; ++l) {
            double s = 0.0;
            for (int i = 0; i < a.rows; ++i) s += a.at(i, j) * b.at(i, l);
            c.at(j, l) = s;
        }
    return c;
}

DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.cols, b.cols, "matmul_tb");
    DenseMatrix c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (int l = 0; l < a.cols; ++l) s += a.at(i, l) * b.at(j, l);
            c.at(i, j) = s;
        }
    return c;
}

double dot(const FlatVector& a, const FlatVector& b) {
    if (a.size() != b.size()) throw InvalidInputError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpby(double alpha, const DenseMatrix& x, double beta, DenseMatrix& y) {
    if (!x.same_shape(y)) throw InvalidInputError("axpby: shape mismatch");
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = alpha * x.data[i] + beta * y.data[i];
}

}  // namespace serial

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.cols, b.rows, "matmul");
    DenseMatrix c(a.rows, b.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) matmul_row(a, b, c, i);
    return c;
}

DenseMatrix matmul_ta(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.rows, b.rows, "matmul_ta");
    DenseMatrix c(a.cols, b.cols);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < a.cols; ++j) matmul_ta_row(a, b, c, j);
    return c;
}

DenseMatrix matmul_tb(const DenseMatrix& a, const DenseMatrix& b) {
    check_inner(a.cols, b.cols, "matmul_tb");
    DenseMatrix c(a.rows, b.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) matmul_tb_row(a, b, c, i);
    return c;
}

double dot(const FlatVector& a, const FlatVector& b) {
    if (a.size() != b.size()) throw InvalidInputError("dot: length mismatch");
    const std::size_t n = a.size();
    const std::size_t nchunks = (n + kDotChunk - 1) / kDotChunk;
    if (nchunks <= 1) return dot_chunk(a.data(), b.data(), 0, n);
    std::vector<double> partials(nchunks);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < static_cast<long>(nchunks); ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * kDotChunk;
        const std::size_t hi = std::min(n, lo + kDotChunk);
        partials[c] = dot_chunk(a.data(), b.data(), lo, hi);
    }
    // Partials combined in chunk order: the result does not depend on the
    // thread count.
    double s = 0.0;
    for (double p : partials) s += p;
    return s;
}

void axpby(double alpha, const DenseMatrix& x, double beta, DenseMatrix& y) {
    if (!x.same_shape(y)) throw InvalidInputError("axpby: shape mismatch");
    const long n = static_cast<long>(y.data.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) y.data[i] = alpha * x.data[i] + beta * y.data[i];
}

double sqnorm(const FlatVector& a) { return dot(a, a); }

double norm(const FlatVector& a) { return std::sqrt(sqnorm(a)); }

double frob_norm(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

double frob_dist(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw InvalidInputError("frob_dist: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void orthonormalize_columns(DenseMatrix& m, rng::Rng& rng) {
    const int n = m.rows;
    const int r = m.cols;
    // Work on the transpose so every projection runs unit-stride.
    DenseMatrix t(r, n);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < r; ++c) t.at(c, i) = m.at(i, c);
    for (int c = 0; c < r; ++c) {
        double* col = &t.data[static_cast<std::size_t>(c) * n];
        auto project_out_previous = [&]() {
            for (int j = 0; j < c; ++j) {
                const double* prev = &t.data[static_cast<std::size_t>(j) * n];
                double d = 0.0;
                for (int i = 0; i < n; ++i) d += prev[i] * col[i];
                for (int i = 0; i < n; ++i) col[i] -= d * prev[i];
            }
        };
        project_out_previous();
        double nrm = 0.0;
        for (int i = 0; i < n; ++i) nrm += col[i] * col[i];
        nrm = std::sqrt(nrm);
        while (nrm < 1e-10) {
            // Degenerate column: replace with a fresh seeded draw and
            // re-orthogonalize so rank-deficient input still yields a basis.
            for (int i = 0; i < n; ++i) col[i] = rng.normal();
            project_out_previous();
            nrm = 0.0;
            for (int i = 0; i < n; ++i) nrm += col[i] * col[i];
            nrm = std::sqrt(nrm);
        }
        const double inv = 1.0 / nrm;
        for (int i = 0; i < n; ++i) col[i] *= inv;
    }
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < r; ++c) m.at(i, c) = t.at(c, i);
}

}  // namespace linalg
}  // namespace congrad
