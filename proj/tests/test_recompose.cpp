#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsc/recompose.hpp"
#include "oracles.hpp"

using namespace hsc;

namespace {

Image image_from(std::initializer_list<std::initializer_list<double>> rows) {
    const int n = static_cast<int>(rows.size());
    Matrix m(n, n);
    int r = 0;
    for (const auto& row : rows) {
        int c = 0;
        for (const double v : row) m(r, c++) = v;
        ++r;
    }
    return Image(std::move(m));
}

} // namespace

TEST_CASE("error_matrix: identical inputs give the zero matrix") {
    Rng rng(1);
    const Image x = oracle::random_image(5, rng);
    const ErrorMatrix b = error_matrix(x, x);
    CHECK(b.entries.max_abs() == 0.0);
}

TEST_CASE("error_matrix: diagonal difference outer product") {
    const Image x = image_from({{std::sqrt(3.0), 0.0}, {0.0, 1.0}});
    const Image zero = image_from({{0.0, 0.0}, {0.0, 0.0}});
    const ErrorMatrix b = error_matrix(x, zero);
    CHECK(b.entries(0, 0) == doctest::Approx(3.0));
    CHECK(b.entries(1, 1) == doctest::Approx(1.0));
    CHECK(std::abs(b.entries(0, 1)) < 1e-12);
}

TEST_CASE("error_matrix: random pair is symmetric PSD with trace = Frobenius") {
    Rng rng(2);
    const Image x = oracle::random_image(6, rng);
    const Image g = oracle::random_image(6, rng);
    const ErrorMatrix b = error_matrix(x, g);

    double frob = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const double d = x.pixels(i, j) - g.pixels(i, j);
            frob += d * d;
        }
    CHECK(b.entries.trace() == doctest::Approx(frob));

    const EigenSpectrum spec = eig_psd(b);
    for (const double v : spec.values) CHECK(v >= -1e-10);
}

TEST_CASE("error_matrix rejects mismatched dimensions") {
    Rng rng(3);
    CHECK_THROWS_AS(error_matrix(oracle::random_image(4, rng), oracle::random_image(5, rng)),
                    std::invalid_argument);
}

TEST_CASE("eig_psd examples: identity and diagonal") {
    const EigenSpectrum id = eig_psd(ErrorMatrix(Matrix::identity(3)));
    for (const double v : id.values) CHECK(v == doctest::Approx(1.0));

    Matrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const EigenSpectrum e = eig_psd(ErrorMatrix(std::move(d)));
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(1.0));
    CHECK(e.vectors(0, 0) == doctest::Approx(1.0));
    CHECK(e.vectors(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("eig_psd matches the independent eigenvalue oracle on random PSD 8x8") {
    Rng rng(4);
    const Matrix b = oracle::random_psd(8, rng);
    const EigenSpectrum e = eig_psd(ErrorMatrix(b));
    const std::vector<double> want = oracle::eigenvalues_by_charpoly(b);
    REQUIRE(want.size() == 8);
    for (int i = 0; i < 8; ++i)
        CHECK(std::abs(e.values[i] - want[i]) / std::max(1e-12, std::abs(want[i])) < 1e-6);
}

TEST_CASE("eig_psd rejects asymmetric input") {
    Matrix m(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = 1.0 + 1e-6;
    CHECK_THROWS_AS(ErrorMatrix(std::move(m)), std::invalid_argument);
}

TEST_CASE("optimal_projection: d = 0 yields the empty basis with zero projector") {
    Rng rng(5);
    const EigenSpectrum spec = eig_psd(ErrorMatrix(oracle::random_psd(4, rng)));
    const ProjectionBasis a = optimal_projection(spec, 0);
    CHECK(a.rank() == 0);
    CHECK(a.projector(4).max_abs() == 0.0);
}

TEST_CASE("optimal_projection: dominant axis of diag(3,1)") {
    Matrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const ProjectionBasis a = optimal_projection(eig_psd(ErrorMatrix(std::move(d))), 1);
    CHECK(std::abs(a.rows(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(a.rows(0, 1)) < 1e-12);
}

TEST_CASE("optimal_projection beats 1000 random orthonormal bases (trace objective)") {
    Rng rng(6);
    const Matrix b = oracle::random_psd(6, rng);
    const EigenSpectrum spec = eig_psd(ErrorMatrix(b));
    const ProjectionBasis a = optimal_projection(spec, 2);
    const double best = oracle::residual_trace(a.rows, b);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix q = oracle::random_orthonormal_rows(2, 6, rng);
        CHECK(best <= oracle::residual_trace(q, b) + 1e-9);
    }
}

TEST_CASE("optimal_projection rejects d out of range") {
    Rng rng(7);
    const EigenSpectrum spec = eig_psd(ErrorMatrix(oracle::random_psd(4, rng)));
    CHECK_THROWS_AS(optimal_projection(spec, 5), std::invalid_argument);
    CHECK_THROWS_AS(optimal_projection(spec, -1), std::invalid_argument);
}

TEST_CASE("recompose: d = 0 returns the generated image") {
    Rng rng(8);
    const Image g = oracle::random_image(5, rng);
    const Image out = recompose(ProjectionBasis(Matrix(0, 5)), Matrix(0, 5), g);
    CHECK((out.pixels - g.pixels).max_abs() == 0.0);
}

TEST_CASE("recompose: full rank with exact payload recovers the original") {
    Rng rng(9);
    const Image x = oracle::random_image(7, rng);
    const Image g = oracle::random_image(7, rng);
    const EigenSpectrum spec = eig_psd(error_matrix(x, g));
    const ProjectionBasis a = optimal_projection(spec, 7);
    const Matrix projected = matmul(a.rows, x.pixels);
    const Image out = recompose(a, projected, g);
    CHECK(achieved_mse(x, out).raw < 1e-10);
}

TEST_CASE("recompose: zero-error base case") {
    Rng rng(10);
    const Image x = oracle::random_image(6, rng);
    const Matrix basis = oracle::random_orthonormal_rows(3, 6, rng);
    const Image out = recompose(ProjectionBasis(basis), matmul(basis, x.pixels), x);
    CHECK(achieved_mse(x, out).raw < 1e-20);
}

TEST_CASE("recompose rejects inconsistent shapes") {
    Rng rng(11);
    const Image g = oracle::random_image(5, rng);
    const Matrix basis = oracle::random_orthonormal_rows(2, 5, rng);
    CHECK_THROWS_AS(recompose(ProjectionBasis(basis), Matrix(3, 5), g), std::invalid_argument);
}

TEST_CASE("closed_form_mse examples") {
    Matrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    const EigenSpectrum spec = eig_psd(ErrorMatrix(std::move(d)));
    CHECK(closed_form_mse(spec, 1) == doctest::Approx(1.0));
    CHECK(closed_form_mse(spec, 2) == 0.0);
    CHECK(closed_form_mse(spec, 0) == doctest::Approx(4.0));
    CHECK_THROWS_AS(closed_form_mse(spec, 3), std::invalid_argument);
}

TEST_CASE("closed_form_mse equals the end-to-end recomposition oracle for every d") {
    Rng rng(12);
    const Image x = oracle::random_image(8, rng);
    const Image g = oracle::random_image(8, rng);
    const ErrorMatrix b = error_matrix(x, g);
    const EigenSpectrum spec = eig_psd(b);
    for (int d = 0; d <= 8; ++d) {
        const ProjectionBasis a = optimal_projection(spec, d);
        const Image out = recompose(a, matmul(a.rows, x.pixels), g);
        const double want = closed_form_mse(spec, d);
        const double got = achieved_mse(x, out).raw;
        CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("achieved_mse examples") {
    Rng rng(13);
    const Image x = oracle::random_image(4, rng);
    CHECK(achieved_mse(x, x).raw == 0.0);

    const Image ones = image_from({{1.0, 1.0}, {1.0, 1.0}});
    const Image zero = image_from({{0.0, 0.0}, {0.0, 0.0}});
    const Mse m = achieved_mse(ones, zero);
    CHECK(m.raw == doctest::Approx(4.0));
    CHECK(m.per_pixel == doctest::Approx(1.0));

    const Image g = oracle::random_image(4, rng);
    CHECK(achieved_mse(x, g).raw == doctest::Approx(error_matrix(x, g).entries.trace()));
}

TEST_CASE("average_error_matrix examples") {
    Rng rng(14);
    const Image x = oracle::random_image(4, rng);
    const Image g = oracle::random_image(4, rng);
    const ErrorMatrix b = error_matrix(x, g);

    const ErrorMatrix single = average_error_matrix({b});
    CHECK((single.entries - b.entries).max_abs() == 0.0);

    const ErrorMatrix same = average_error_matrix({b, b, b});
    CHECK((same.entries - b.entries).max_abs() < 1e-15);

    Matrix d1(2, 2), d2(2, 2), d3(2, 2);
    d1(0, 0) = 2.0;
    d2(1, 1) = 2.0;
    d3(0, 0) = 1.0;
    d3(1, 1) = 1.0;
    const ErrorMatrix avg = average_error_matrix(
        {ErrorMatrix(std::move(d1)), ErrorMatrix(std::move(d2)), ErrorMatrix(std::move(d3))});
    CHECK(avg.entries(0, 0) == doctest::Approx(1.0));
    CHECK(avg.entries(1, 1) == doctest::Approx(1.0));
    CHECK(std::abs(avg.entries(0, 1)) < 1e-15);

    CHECK_THROWS_AS(average_error_matrix({}), std::invalid_argument);
}

TEST_CASE("invariant: projector idempotency for generated bases") {
    Rng rng(15);
    for (int trial = 0; trial < 10; ++trial) {
        const int l = 4 + static_cast<int>(rng.below(8));
        const int d = static_cast<int>(rng.below(static_cast<std::uint64_t>(l) + 1));
        const EigenSpectrum spec = eig_psd(ErrorMatrix(oracle::random_psd(l, rng)));
        const ProjectionBasis a = optimal_projection(spec, d);
        const Matrix p = Matrix::identity(l) - a.projector(l);
        CHECK((matmul(p, p) - p).frobenius_norm() < 1e-8);
    }
}

TEST_CASE("invariant: exact MSE law at L = 32") {
    Rng rng(16);
    const Image x = oracle::random_image(32, rng);
    const Image g = oracle::random_image(32, rng);
    const EigenSpectrum spec = eig_psd(error_matrix(x, g));
    for (int d = 0; d <= 32; d += 4) {
        const ProjectionBasis a = optimal_projection(spec, d);
        const Image out = recompose(a, matmul(a.rows, x.pixels), g);
        const double want = closed_form_mse(spec, d);
        const double got = achieved_mse(x, out).raw;
        CHECK(std::abs(got - want) <= 1e-8 * std::max(1.0, want));
    }
}

TEST_CASE("invariant: closed_form_mse non-increasing in d, Tr(B) at 0, zero at L") {
    Rng rng(17);
    const Matrix b = oracle::random_psd(9, rng);
    const EigenSpectrum spec = eig_psd(ErrorMatrix(b));
    CHECK(closed_form_mse(spec, 0) == doctest::Approx(b.trace()));
    CHECK(closed_form_mse(spec, 9) == 0.0);
    for (int d = 1; d <= 9; ++d)
        CHECK(closed_form_mse(spec, d) <= closed_form_mse(spec, d - 1) + 1e-12);
}

TEST_CASE("invariant: range-null identity") {
    Rng rng(18);
    for (int trial = 0; trial < 5; ++trial) {
        const int l = 6;
        const int d = 1 + static_cast<int>(rng.below(6));
        const Matrix basis = oracle::random_orthonormal_rows(d, l, rng);
        const Image x = oracle::random_image(l, rng);
        // A^T A x + (I - A^T A) x == x
        const Matrix p = matmul_tn(basis, basis);
        const Matrix lhs = matmul(p, x.pixels) + (x.pixels - matmul(p, x.pixels));
        CHECK((lhs - x.pixels).max_abs() < 1e-10);
    }
}

TEST_CASE("degenerate eigenvalues: MSE law invariant to tie-breaking") {
    // B with a repeated eigenvalue: the tail sums are unaffected by which
    // orthonormal basis of the tied subspace is returned.
    Matrix b = Matrix::identity(4);
    b(0, 0) = 5.0; // spectrum {5, 1, 1, 1}
    const EigenSpectrum spec = eig_psd(ErrorMatrix(std::move(b)));
    CHECK(closed_form_mse(spec, 1) == doctest::Approx(3.0));
    CHECK(closed_form_mse(spec, 2) == doctest::Approx(2.0));

    // The projector onto the top-d eigenspace is well defined for d = 1.
    const ProjectionBasis a = optimal_projection(spec, 1);
    CHECK(std::abs(a.rows(0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("pseudoinverse equals transpose for orthonormal rows") {
    Rng rng(19);
    const Matrix basis = oracle::random_orthonormal_rows(3, 7, rng);
    const ProjectionBasis a(basis);
    // A A^T = I_d  =>  pinv(A) = A^T(A A^T)^-1 = A^T.
    const Matrix aat = matmul_nt(a.rows, a.rows);
    CHECK((aat - Matrix::identity(3)).max_abs() < 1e-8);
}
