#include "hsc/recompose.hpp"

#include <cmath>

namespace hsc {

ErrorMatrix::ErrorMatrix(Matrix m) : entries(std::move(m)) {
    if (entries.rows() != entries.cols())
        throw std::invalid_argument("ErrorMatrix: matrix must be square");
    if (!entries.all_finite()) throw std::invalid_argument("ErrorMatrix: non-finite entry");
    const int n = entries.rows();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs(entries(i, j) - entries(j, i)) > 1e-12)
                throw std::invalid_argument("ErrorMatrix: symmetry violated beyond 1e-12");
}

ProjectionBasis::ProjectionBasis(Matrix m, double tol) : rows(std::move(m)) {
    const int d = rows.rows();
    const int l = rows.cols();
    if (d > l) throw std::invalid_argument("ProjectionBasis: more rows than columns");
    // Row orthonormality: A A^T = I_d.
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            double dot = 0.0;
            for (int c = 0; c < l; ++c) dot += rows(i, c) * rows(j, c);
            const double want = (i == j) ? 1.0 : 0.0;
            if (std::abs(dot - want) > tol)
                throw std::invalid_argument("ProjectionBasis: rows not orthonormal");
        }
    }
}

Matrix ProjectionBasis::projector(int side_if_empty) const {
    if (rank() == 0) {
        const int n = rows.cols() > 0 ? rows.cols() : side_if_empty;
        return Matrix(n, n);
    }
    return matmul_tn(rows, rows);
}

ErrorMatrix error_matrix(const Image& original, const Image& generated) {
    if (original.side() != generated.side())
        throw std::invalid_argument("error_matrix: image dimensions differ");
    const Matrix diff = original.pixels - generated.pixels;
    Matrix b = matmul_nt(diff, diff);
    // Symmetrize to remove accumulation round-off.
    const int n = b.rows();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double s = 0.5 * (b(i, j) + b(j, i));
            b(i, j) = s;
            b(j, i) = s;
        }
    }
    return ErrorMatrix(std::move(b));
}

EigenSpectrum eig_psd(const ErrorMatrix& b) {
    SymmetricEigen e = jacobi_eigen(b.entries, 1e-10);
    for (const double v : e.values)
        if (v < -1e-10)
            throw NumericalError("eig_psd: negative eigenvalue beyond tolerance");
    EigenSpectrum spec;
    spec.values = std::move(e.values);
    spec.vectors = std::move(e.vectors);
    return spec;
}

ProjectionBasis optimal_projection(const EigenSpectrum& spec, int d) {
    const int l = spec.side();
    if (d < 0 || d > l) throw std::invalid_argument("optimal_projection: d out of range");
    Matrix a(d, l);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < l; ++c) a(r, c) = spec.vectors(r, c);
    return ProjectionBasis(std::move(a));
}

Image recompose(const ProjectionBasis& a, const Matrix& projected, const Image& generated) {
    const int l = generated.side();
    const int d = a.rank();
    if (d > 0 && a.side() != l)
        throw std::invalid_argument("recompose: basis side length mismatch");
    if (projected.rows() != d || (d > 0 && projected.cols() != l))
        throw std::invalid_argument("recompose: projected block shape mismatch");
    if (d == 0) return generated;

    // Xtilde = Xhat + A^T (projected - A Xhat); avoids forming I - A^T A.
    Matrix residual = projected - matmul(a.rows, generated.pixels);
    Matrix xt = generated.pixels;
    gemm(true, false, 1.0, a.rows, residual, 1.0, xt);
    return Image(std::move(xt));
}

double closed_form_mse(const EigenSpectrum& spec, int d) {
    const int l = static_cast<int>(spec.values.size());
    if (d < 0 || d > l) throw std::invalid_argument("closed_form_mse: d out of range");
    double tail = 0.0;
    for (int i = d; i < l; ++i) tail += std::max(0.0, spec.values[i]);
    return tail;
}

Mse achieved_mse(const Image& original, const Image& recomposed) {
    if (original.side() != recomposed.side())
        throw std::invalid_argument("achieved_mse: image dimensions differ");
    const Matrix diff = original.pixels - recomposed.pixels;
    Mse m;
    m.raw = diff.sum_squares();
    m.per_pixel = m.raw / static_cast<double>(diff.size());
    return m;
}

ErrorMatrix average_error_matrix(const std::vector<ErrorMatrix>& channels) {
    if (channels.empty())
        throw std::invalid_argument("average_error_matrix: empty channel list");
    Matrix acc = channels.front().entries;
    for (std::size_t i = 1; i < channels.size(); ++i) {
        if (channels[i].side() != channels.front().side())
            throw std::invalid_argument("average_error_matrix: dimension mismatch");
        acc += channels[i].entries;
    }
    acc *= 1.0 / static_cast<double>(channels.size());
    return ErrorMatrix(std::move(acc));
}

} // namespace hsc
