#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsc {

// Error raised when an iterative numerical procedure fails (divergence,
// iteration cap). Distinct from contract violations so callers can map it
// to a dedicated exit code.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Small fixed-size images and projection
// bases as well as MLP weight blocks and activation batches all use this one
// type; there is no expression templating, just plain storage plus the
// handful of operations the pipelines need.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> row(int r) { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    double frobenius_norm() const;
    double sum_squares() const;
    double max_abs() const;
    double trace() const;

    bool all_finite() const;

private:
    void check_same_shape(const Matrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw std::invalid_argument("Matrix: shape mismatch");
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = alpha * op(A) * op(B) + beta * C. Dispatches to an external BLAS when
// one can be loaded (see blas_backend_name) and to an internal blocked kernel
// otherwise. op(A) is A or A^T depending on trans_a.
void gemm(bool trans_a, bool trans_b, double alpha, const Matrix& a, const Matrix& b,
          double beta, Matrix& c);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b); // A^T * B
Matrix matmul_nt(const Matrix& a, const Matrix& b); // A * B^T

// Name of the GEMM backend in use ("openblas" or "internal").
std::string blas_backend_name();

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returned eigenvalues are sorted descending; eigenvectors are returned as
// the ROWS of `vectors` (row l pairs with eigenvalue l) with a deterministic
// sign convention: the first component of each vector whose magnitude
// exceeds 1e-12 is made positive.
struct SymmetricEigen {
    std::vector<double> values;
    Matrix vectors; // n x n, row l = eigenvector l
};

SymmetricEigen jacobi_eigen(const Matrix& sym, double tol = 1e-10);

} // namespace hsc
