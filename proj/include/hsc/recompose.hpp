#pragma once

#include <vector>

#include "hsc/linalg.hpp"

namespace hsc {

// A square grayscale image. Pixel values are dimensionless intensities with
// nominal range [0,1]; intermediate pipeline products (recompositions under
// channel noise) may step slightly outside that range, so only finiteness
// and squareness are enforced here.
struct Image {
    Matrix pixels;

    Image() = default;
    explicit Image(Matrix p) : pixels(std::move(p)) {
        if (pixels.rows() != pixels.cols())
            throw std::invalid_argument("Image: pixel matrix must be square");
        if (pixels.rows() < 1) throw std::invalid_argument("Image: side length must be >= 1");
        if (!pixels.all_finite()) throw std::invalid_argument("Image: non-finite pixel value");
    }

    int side() const { return pixels.rows(); }
};

// Symmetric positive semidefinite prediction-error matrix B = D D^T with
// D the pixel-difference matrix. Symmetry is validated to 1e-12 absolute.
struct ErrorMatrix {
    Matrix entries;

    ErrorMatrix() = default;
    explicit ErrorMatrix(Matrix m);

    int side() const { return entries.rows(); }
};

// Eigendecomposition of an ErrorMatrix: eigenvalues sorted descending,
// eigenvectors stored as rows (row l pairs with values[l]).
struct EigenSpectrum {
    std::vector<double> values;
    Matrix vectors;

    int side() const { return vectors.rows(); }
};

// d x L matrix with orthonormal rows. Under this restriction the Moore-
// Penrose pseudoinverse is exactly the transpose, and P = A^T A is the
// orthogonal projector onto the row space.
struct ProjectionBasis {
    Matrix rows; // d x L; d == 0 means the empty basis (pure-SC mode)

    ProjectionBasis() = default;
    explicit ProjectionBasis(Matrix m, double tol = 1e-8);

    int rank() const { return rows.rows(); }
    int side() const { return rows.cols(); }

    // P = A^T A (L x L). Empty basis yields the zero matrix.
    Matrix projector(int side_if_empty = 0) const;
};

// B = (X - Xhat)(X - Xhat)^T. Trace equals the squared Frobenius norm of the
// pixel difference.
ErrorMatrix error_matrix(const Image& original, const Image& generated);

// Eigendecomposition with PSD validation (eigenvalues >= -1e-10).
EigenSpectrum eig_psd(const ErrorMatrix& b);

// Rows = eigenvectors of the d largest eigenvalues. d == 0 gives the empty
// basis.
ProjectionBasis optimal_projection(const EigenSpectrum& spec, int d);

// Xtilde = A^T * projected + (I - A^T A) * generated. `projected` is the
// received d x L block A*X.
Image recompose(const ProjectionBasis& a, const Matrix& projected, const Image& generated);

// Minimum achievable squared-Frobenius reconstruction error for rank d:
// the tail sum of eigenvalues below index d. Negative round-off eigenvalues
// are clamped to zero.
double closed_form_mse(const EigenSpectrum& spec, int d);

struct Mse {
    double raw = 0.0;       // squared Frobenius norm of the difference
    double per_pixel = 0.0; // raw / L^2
};

Mse achieved_mse(const Image& original, const Image& recomposed);

// Element-wise mean of per-channel error matrices (color handling).
ErrorMatrix average_error_matrix(const std::vector<ErrorMatrix>& channels);

} // namespace hsc
