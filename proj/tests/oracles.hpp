// Test-only reference implementations, independent of the library code paths
// they check: exact truncated SVD (cyclic Jacobi on MᵀM), the dense
// uncompressed EMA recurrence, a straight-line two-task gradient-surgery
// evaluation, central finite differences, and a full-sort selection.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "congrad/linalg.hpp"
#include "congrad/preference.hpp"

namespace oracles {

using congrad::DenseMatrix;
using congrad::FlatVector;

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues (descending) and the eigenvector matrix V (columns).
inline void jacobi_eigh(DenseMatrix a, std::vector<double>& eigenvalues, DenseMatrix& v) {
    const int n = a.rows;
    v = DenseMatrix(n, n);
    for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p), vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = a.at(i, i);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return diag[x] > diag[y]; });
    eigenvalues.resize(n);
    DenseMatrix vs(n, n);
    for (int c = 0; c < n; ++c) {
        eigenvalues[c] = diag[order[c]];
        for (int r = 0; r < n; ++r) vs.at(r, c) = v.at(r, order[c]);
    }
    v = std::move(vs);
}

// Best rank-r approximation via exact SVD: M_r = M · V_r · V_rᵀ with V_r the
// top-r eigenvectors of MᵀM.
inline DenseMatrix truncated_svd_reconstruction(const DenseMatrix& m, int r) {
    DenseMatrix mtm = congrad::linalg::serial::matmul_ta(m, m);
    std::vector<double> eig;
    DenseMatrix v;
    jacobi_eigh(mtm, eig, v);
    DenseMatrix vr(m.cols, r);
    for (int i = 0; i < m.cols; ++i)
        for (int c = 0; c < r; ++c) vr.at(i, c) = v.at(i, c);
    DenseMatrix mv = congrad::linalg::serial::matmul(m, vr);
    return congrad::linalg::serial::matmul_tb(mv, vr);
}

// Dense, uncompressed EMA recurrence.
inline DenseMatrix dense_ema(const std::vector<DenseMatrix>& grads, double gamma) {
    DenseMatrix g(grads.front().rows, grads.front().cols);
    for (const auto& grad : grads)
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] = gamma * g.data[i] + (1.0 - gamma) * grad.data[i];
    return g;
}

// Straight-line evaluation of the two-task gradient-surgery formulas with a
// fixed projection order (the only order there is for two tasks).
inline FlatVector pcgrad_two_task(const FlatVector& g1, const FlatVector& g2) {
    auto project = [](FlatVector g, const FlatVector& other) {
        double d = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            d += g[i] * other[i];
            nn += other[i] * other[i];
        }
        if (d < 0.0)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= d / nn * other[i];
        return g;
    };
    FlatVector a = project(g1, g2);
    FlatVector b = project(g2, g1);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

// Central finite differences of lp_dpo_loss w.r.t. the flattened parameters.
inline FlatVector finite_difference_gradient(const congrad::preference::ToyPolicy& policy,
                                             const congrad::preference::ToyPolicy& ref,
                                             const congrad::preference::PreferencePair& pair,
                                             const congrad::preference::DpoConfig& cfg,
                                             double h = 1e-5) {
    using congrad::preference::lp_dpo_loss;
    using congrad::preference::sgd_step;
    const std::size_t n = policy.param_count();
    FlatVector grad(n);
    for (std::size_t i = 0; i < n; ++i) {
        FlatVector e(n, 0.0);
        e[i] = -h;  // sgd_step subtracts, so this adds +h
        const double up = lp_dpo_loss(sgd_step(policy, e, 1.0), ref, pair, cfg);
        e[i] = h;
        const double dn = lp_dpo_loss(sgd_step(policy, e, 1.0), ref, pair, cfg);
        grad[i] = (up - dn) / (2.0 * h);
    }
    return grad;
}

// Full-sort reference for top-fraction selection within one language.
inline std::vector<int> select_by_full_sort(std::vector<std::pair<double, int>> scored,
                                            double rho, bool want_max) {
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return want_max ? a.first > b.first : a.first < b.first;
        return a.second < b.second;
    });
    std::size_t keep = static_cast<std::size_t>(std::ceil(rho * scored.size()));
    keep = std::max<std::size_t>(1, std::min(keep, scored.size()));
    std::vector<int> ids;
    for (std::size_t i = 0; i < keep; ++i) ids.push_back(scored[i].second);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace oracles
