#pragma once

// Test-side oracles, independent of the library implementation paths they
// check. The eigenvalue oracle goes through the characteristic polynomial
// (Faddeev-LeVerrier) with bisection root finding; orthonormal ensembles use
// plain Gram-Schmidt on Gaussian matrices.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "hsc/linalg.hpp"
#include "hsc/recompose.hpp"
#include "hsc/rng.hpp"

namespace oracle {

using hsc::Matrix;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k)
            for (int j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

// Characteristic polynomial coefficients of A via Faddeev-LeVerrier:
// p(x) = x^n + c[1] x^(n-1) + ... + c[n]. Extended precision throughout:
// the polynomial route is ill-conditioned for small eigenvalues in plain
// doubles.
inline std::vector<long double> charpoly(const Matrix& a) {
    const int n = a.rows();
    std::vector<long double> c(static_cast<std::size_t>(n) + 1, 0.0L);
    c[0] = 1.0L;
    std::vector<long double> m(static_cast<std::size_t>(n) * n, 0.0L); // M_0 = 0
    std::vector<long double> tmp(m.size());
    auto mul = [&](const std::vector<long double>& rhs, std::vector<long double>& out) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                long double s = 0.0L;
                for (int k = 0; k < n; ++k)
                    s += static_cast<long double>(a(i, k)) * rhs[static_cast<std::size_t>(k) * n + j];
                out[static_cast<std::size_t>(i) * n + j] = s;
            }
    };
    for (int k = 1; k <= n; ++k) {
        // M_k = A*M_{k-1} + c_{k-1} I
        mul(m, tmp);
        for (int i = 0; i < n; ++i) tmp[static_cast<std::size_t>(i) * n + i] += c[k - 1];
        m = tmp;
        mul(m, tmp);
        long double tr = 0.0L;
        for (int i = 0; i < n; ++i) tr += tmp[static_cast<std::size_t>(i) * n + i];
        c[k] = -tr / k;
    }
    return c;
}

inline long double polyval(const std::vector<long double>& c, long double x) {
    long double v = 0.0L;
    for (const long double coef : c) v = v * x + coef;
    return v;
}

// All real roots of the characteristic polynomial of a symmetric PSD matrix,
// isolated by sign changes on a fine grid over [lo, hi] and refined by
// bisection. Descending order. Suitable for small matrices with separated
// spectra (the random PSD instances used in tests).
inline std::vector<double> eigenvalues_by_charpoly(const Matrix& a, int grid = 200000) {
    const int n = a.rows();
    const std::vector<long double> c = charpoly(a);
    long double tr = 0.0L;
    for (int i = 0; i < n; ++i) tr += a(i, i);
    const long double margin = 1e-6L * std::max<long double>(1.0L, tr);
    const long double lo = -margin;
    const long double hi = tr + margin; // PSD: all roots within [0, trace]

    std::vector<double> roots;
    long double prev_v = polyval(c, lo);
    long double prev_x = lo;
    for (int g = 1; g <= grid; ++g) {
        const long double x = lo + (hi - lo) * g / grid;
        const long double v = polyval(c, x);
        if (v == 0.0L) {
            roots.push_back(static_cast<double>(x));
        } else if ((prev_v < 0.0L) != (v < 0.0L)) {
            long double a0 = prev_x, b0 = x;
            long double va = prev_v;
            for (int it = 0; it < 200; ++it) {
                const long double mid = 0.5L * (a0 + b0);
                const long double vm = polyval(c, mid);
                if ((vm < 0.0L) == (va < 0.0L)) {
                    a0 = mid;
                    va = vm;
                } else {
                    b0 = mid;
                }
            }
            roots.push_back(static_cast<double>(0.5L * (a0 + b0)));
        }
        prev_x = x;
        prev_v = v;
    }
    std::sort(roots.rbegin(), roots.rend());
    return roots;
}

inline Matrix random_matrix(int rows, int cols, hsc::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double* p = m.data(); p != m.data() + m.size(); ++p) *p = rng.uniform(lo, hi);
    return m;
}

// Random symmetric PSD matrix with a generically well-separated spectrum.
inline Matrix random_psd(int n, hsc::Rng& rng) {
    const Matrix g = random_matrix(n, n, rng);
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += g(i, k) * g(j, k);
            b(i, j) = s;
        }
    // exact symmetrization
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (b(i, j) + b(j, i));
            b(i, j) = s;
            b(j, i) = s;
        }
    return b;
}

// Random d x n matrix with orthonormal rows (Gram-Schmidt on Gaussian rows).
inline Matrix random_orthonormal_rows(int d, int n, hsc::Rng& rng) {
    Matrix q(d, n);
    for (int i = 0; i < d; ++i) {
        for (;;) {
            for (int c = 0; c < n; ++c) q(i, c) = rng.normal();
            for (int j = 0; j < i; ++j) {
                double dot = 0.0;
                for (int c = 0; c < n; ++c) dot += q(i, c) * q(j, c);
                for (int c = 0; c < n; ++c) q(i, c) -= dot * q(j, c);
            }
            double norm2 = 0.0;
            for (int c = 0; c < n; ++c) norm2 += q(i, c) * q(i, c);
            if (norm2 > 1e-12) {
                const double inv = 1.0 / std::sqrt(norm2);
                for (int c = 0; c < n; ++c) q(i, c) *= inv;
                break;
            }
        }
    }
    return q;
}

// Tr((I - A^T A) B) evaluated directly.
inline double residual_trace(const Matrix& basis, const Matrix& b) {
    const int n = b.rows();
    const int d = basis.rows();
    Matrix p(n, n); // A^T A
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int r = 0; r < d; ++r) s += basis(r, i) * basis(r, j);
            p(i, j) = s;
        }
    double tr = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) tr -= p(i, j) * b(j, i);
        tr += b(i, i);
    }
    return tr;
}

inline hsc::Image random_image(int side, hsc::Rng& rng) {
    Matrix m(side, side);
    for (double* p = m.data(); p != m.data() + m.size(); ++p) *p = rng.uniform01();
    return hsc::Image(std::move(m));
}

} // namespace oracle
