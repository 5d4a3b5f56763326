#include "hsc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>

#include <dlfcn.h>

namespace hsc {

double Matrix::frobenius_norm() const { return std::sqrt(sum_squares()); }

double Matrix::sum_squares() const {
    double s = 0.0;
    for (const double v : data_) s += v * v;
    return s;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (const double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Matrix::trace() const {
    const int n = std::min(rows_, cols_);
    double t = 0.0;
    for (int i = 0; i < n; ++i) t += (*this)(i, i);
    return t;
}

bool Matrix::all_finite() const {
    for (const double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

using CblasDgemmFn = void (*)(int order, int trans_a, int trans_b, int m, int n, int k,
                              double alpha, const double* a, int lda, const double* b, int ldb,
                              double beta, double* c, int ldc);

constexpr int kCblasRowMajor = 101;
constexpr int kCblasNoTrans = 111;
constexpr int kCblasTrans = 112;

CblasDgemmFn g_dgemm = nullptr;
std::string g_backend = "internal";
std::once_flag g_blas_once;

// Some virtualized hosts mask the CPUID model string, which makes OpenBLAS's
// runtime dispatch fall back to a baseline kernel. Selecting the core family
// from the actually advertised instruction sets restores full speed. The env
// var is only set if the user has not chosen one, and before the library is
// loaded (it is read during library init).
void load_blas() {
    if (!std::getenv("OPENBLAS_CORETYPE")) {
        if (__builtin_cpu_supports("avx512f"))
            ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        else if (__builtin_cpu_supports("avx2"))
            ::setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
    for (const char* name : {"libopenblas.so.0", "libopenblas.so"}) {
        if (void* handle = ::dlopen(name, RTLD_NOW | RTLD_LOCAL)) {
            if (auto fn = reinterpret_cast<CblasDgemmFn>(::dlsym(handle, "cblas_dgemm"))) {
                g_dgemm = fn;
                g_backend = "openblas";
                return;
            }
            ::dlclose(handle);
        }
    }
}

// Blocked fallback kernel, used only when no BLAS library is present.
void gemm_internal(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b,
                   double beta, Matrix& c) {
    const int m = c.rows();
    const int n = c.cols();
    const int k = trans_a ? a.rows() : a.cols();

    for (double* p = c.data(); p != c.data() + c.size(); ++p) *p *= beta;

    constexpr int kc = 64;
    for (int k0 = 0; k0 < k; k0 += kc) {
        const int k1 = std::min(k0 + kc, k);
        for (int i = 0; i < m; ++i) {
            for (int kk = k0; kk < k1; ++kk) {
                const double aik = alpha * (trans_a ? a(kk, i) : a(i, kk));
                if (aik == 0.0) continue;
                double* crow = c.data() + static_cast<std::size_t>(i) * n;
                if (!trans_b) {
                    const double* brow = b.data() + static_cast<std::size_t>(kk) * n;
                    for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
                } else {
                    for (int j = 0; j < n; ++j) crow[j] += aik * b(j, kk);
                }
            }
        }
    }
}

} // namespace

std::string blas_backend_name() {
    std::call_once(g_blas_once, load_blas);
    return g_backend;
}

void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b,
          double beta, Matrix& c) {
    std::call_once(g_blas_once, load_blas);

    const int m = trans_a ? a.cols() : a.rows();
    const int k = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (k != kb) throw std::invalid_argument("gemm: inner dimension mismatch");
    if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm: output shape mismatch");
    if (m == 0 || n == 0) return;
    if (k == 0) {
        for (double* p = c.data(); p != c.data() + c.size(); ++p) *p *= beta;
        return;
    }

    if (g_dgemm) {
        g_dgemm(kCblasRowMajor, trans_a ? kCblasTrans : kCblasNoTrans,
                trans_b ? kCblasTrans : kCblasNoTrans, m, n, k, alpha, a.data(), a.cols(),
                b.data(), b.cols(), beta, c.data(), c.cols());
    } else {
        gemm_internal(trans_a, trans_b, alpha, a, b, beta, c);
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    gemm(false, false, 1.0, a, b, 0.0, c);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix c(a.cols(), b.cols());
    gemm(true, false, 1.0, a, b, 0.0, c);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.rows());
    gemm(false, true, 1.0, a, b, 0.0, c);
    return c;
}

SymmetricEigen jacobi_eigen(const Matrix& sym, double tol) {
    const int n = sym.rows();
    if (n != sym.cols()) throw std::invalid_argument("jacobi_eigen: matrix not square");

    Matrix a = sym;
    Matrix v = Matrix::identity(n);

    const double scale = std::max(1.0, a.frobenius_norm());
    const int max_sweeps = 100 * std::max(1, n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    int sweep = 0;
    while (off_norm() > tol * scale) {
        if (++sweep > max_sweeps)
            throw NumericalError("jacobi_eigen: iteration cap reached without convergence");
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cth = 1.0 / std::sqrt(t * t + 1.0);
                const double sth = t * cth;

                // A <- J^T A J with J the (p,q) Givens rotation.
                for (int i = 0; i < n; ++i) {
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = cth * aip - sth * aiq;
                    a(i, q) = sth * aip + cth * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = a(p, j);
                    const double aqj = a(q, j);
                    a(p, j) = cth * apj - sth * aqj;
                    a(q, j) = sth * apj + cth * aqj;
                }
                // Accumulate V <- V J; columns of V converge to eigenvectors.
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p);
                    const double viq = v(i, q);
                    v(i, p) = cth * vip - sth * viq;
                    v(i, q) = sth * vip + cth * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return a(x, x) > a(y, y); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (int l = 0; l < n; ++l) {
        const int c = order[l];
        out.values[l] = a(c, c);
        // Deterministic sign: first component with magnitude > 1e-12 positive.
        double flip = 1.0;
        for (int i = 0; i < n; ++i) {
            if (std::abs(v(i, c)) > 1e-12) {
                flip = v(i, c) > 0.0 ? 1.0 : -1.0;
                break;
            }
        }
        for (int i = 0; i < n; ++i) out.vectors(l, i) = flip * v(i, c);
    }
    return out;
}

} // namespace hsc
