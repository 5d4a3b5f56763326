#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsc/cr.hpp"
#include "hsc/digital.hpp"
#include "oracles.hpp"

using namespace hsc;

TEST_CASE("build_cr: d = 0 gives an empty payload") {
    Rng rng(1);
    const Image x = oracle::random_image(6, rng);
    const Image g = oracle::random_image(6, rng);
    const ComplementaryPayload p = build_cr(x, g, 0);
    CHECK(p.r == 0);
    CHECK(p.basis.rank() == 0);
    CHECK(p.projected.rows() == 0);
}

TEST_CASE("build_cr: zero error matrix emits standard basis rows and stays exact") {
    Rng rng(2);
    const Image x = oracle::random_image(5, rng);
    const ComplementaryPayload p = build_cr(x, x, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c)
            CHECK(p.basis.rows(r, c) == doctest::Approx(r == c ? 1.0 : 0.0));
    const Image out = recompose(p.basis, p.projected, x);
    CHECK(achieved_mse(x, out).raw < 1e-18);
}

TEST_CASE("build_cr: error-free delivery achieves the closed-form MSE") {
    Rng rng(3);
    const Image x = oracle::random_image(8, rng);
    const Image g = oracle::random_image(8, rng);
    const EigenSpectrum spec = eig_psd(error_matrix(x, g));
    for (int d = 0; d <= 8; ++d) {
        const ComplementaryPayload p = build_cr(x, g, d);
        CHECK(p.r == static_cast<std::size_t>(2 * d * 8));
        const Image out = recompose(p.basis, p.projected, g);
        const double want = closed_form_mse(spec, d);
        CHECK(std::abs(achieved_mse(x, out).raw - want) <= 1e-8 * std::max(1.0, want));
    }
}

TEST_CASE("payload_ratio: fixed constants from the default operating point") {
    const Rational R(4, 5);
    const PayloadReport r0 = payload_ratio(128, R, 28, 0);
    CHECK(r0.eta == doctest::Approx(160.0 / 784.0).epsilon(1e-12));
    CHECK(r0.eta == (160.0 + 56.0 * 0) / 784.0);

    const PayloadReport r28 = payload_ratio(128, R, 28, 28);
    CHECK(r28.eta == (160.0 + 56.0 * 28) / 784.0);
    CHECK(r28.eta == doctest::Approx(2.2041).epsilon(1e-4));

    // k = 0, d = L/2 sits exactly on the eta = 1 boundary
    const PayloadReport bound = payload_ratio(0, R, 28, 14);
    CHECK(bound.eta == 1.0);

    CHECK_THROWS_AS(payload_ratio(128, R, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(payload_ratio(128, Rational(0), 28, 0), std::invalid_argument);
}

TEST_CASE("payload_ratio: eta affine in d with slope 2/L") {
    const Rational R(4, 5);
    const int L = 28;
    const double slope = 2.0 / L;
    double prev = payload_ratio(128, R, L, 0).eta;
    for (int d = 1; d <= L; ++d) {
        const double eta = payload_ratio(128, R, L, d).eta;
        CHECK(eta - prev == doctest::Approx(slope).epsilon(1e-12));
        prev = eta;
    }
}

TEST_CASE("max_feasible_d matches the closed constraint") {
    const Rational R(4, 5);
    CHECK(max_feasible_d(128, R, 28) == 11);
    CHECK(payload_ratio(128, R, 28, 11).eta < 1.0);
    CHECK(payload_ratio(128, R, 28, 12).eta > 1.0);

    // k = 0: bound is L/2, largest strict integer below is ceil(L/2) - 1
    CHECK(max_feasible_d(0, R, 28) == 13);
    CHECK(max_feasible_d(1 << 20, R, 28) == 0);
}

TEST_CASE("serialize/unpack round trip without the chain") {
    Rng rng(4);
    const Image x = oracle::random_image(7, rng);
    const Image g = oracle::random_image(7, rng);
    const ComplementaryPayload p = build_cr(x, g, 3);
    const std::vector<double> wire = serialize_cr(p);
    CHECK(wire.size() == p.r);
    const UnpackedCr u = unpack_cr(wire, 3, 7);
    CHECK((u.basis.rows - p.basis.rows).max_abs() < 1e-12);
    CHECK((u.projected - p.projected).max_abs() == 0.0);
}

TEST_CASE("unpack_cr: d = 0 and length validation") {
    const UnpackedCr u = unpack_cr(std::vector<double>{}, 0, 5);
    CHECK(u.basis.rank() == 0);
    const std::vector<double> bad(7, 0.0);
    CHECK_THROWS_AS(unpack_cr(bad, 1, 5), std::invalid_argument);
}

TEST_CASE("unpack_cr re-orthonormalizes a noisy basis") {
    Rng rng(5);
    const Matrix basis = oracle::random_orthonormal_rows(3, 8, rng);
    std::vector<double> wire;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 8; ++c) wire.push_back(basis(r, c) + 0.01 * rng.normal());
    for (int i = 0; i < 3 * 8; ++i) wire.push_back(rng.normal());

    const UnpackedCr u = unpack_cr(wire, 3, 8);
    const Matrix aat = matmul_nt(u.basis.rows, u.basis.rows);
    CHECK((aat - Matrix::identity(3)).max_abs() < 1e-10);
    const Matrix p = matmul_tn(u.basis.rows, u.basis.rows);
    CHECK((matmul(p, p) - p).frobenius_norm() < 1e-8);
}

TEST_CASE("unpack_cr survives rank-deficient received rows") {
    // two identical rows: Gram-Schmidt must substitute a deterministic
    // direction and still return an orthonormal basis
    std::vector<double> wire;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) wire.push_back(c == 0 ? 1.0 : 0.0);
    for (int i = 0; i < 8; ++i) wire.push_back(0.5);
    const UnpackedCr u = unpack_cr(wire, 2, 4);
    const Matrix aat = matmul_nt(u.basis.rows, u.basis.rows);
    CHECK((aat - Matrix::identity(2)).max_abs() < 1e-10);
}

TEST_CASE("payload through the noiseless chain stays within the quantizer bound") {
    Rng rng(6);
    const Image x = oracle::random_image(8, rng);
    const Image g = oracle::random_image(8, rng);
    const ComplementaryPayload p = build_cr(x, g, 3);

    Matrix stacked(6, 8);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 8; ++c) {
            stacked(r, c) = p.basis.rows(r, c);
            stacked(3 + r, c) = p.projected(r, c);
        }
    const ChainSpec spec;
    const ChainFrame frame = chain_transmit(stacked, spec);
    const Matrix back = chain_receive(frame.header, frame.symbols, spec);

    // Coarse bound: effective 1.6 bits/coeff -> worst width 1 bit.
    for (int r = 0; r < 6; ++r) {
        const double span = frame.header.ranges[static_cast<std::size_t>(r)].max -
                            frame.header.ranges[static_cast<std::size_t>(r)].min;
        const double bound = span / 4.0 + span / 512.0 + 1e-12;
        for (int c = 0; c < 8; ++c) CHECK(std::abs(back(r, c) - stacked(r, c)) <= bound);
    }
}

TEST_CASE("rgb_build_cr: replicated grayscale matches the grayscale basis") {
    Rng rng(7);
    const Image x = oracle::random_image(6, rng);
    const Image g = oracle::random_image(6, rng);
    const ComplementaryPayload gray = build_cr(x, g, 2);
    const RgbPayload rgb = rgb_build_cr({x, x, x}, {g, g, g}, 2);
    CHECK((rgb.basis.rows - gray.basis.rows).max_abs() < 1e-9);
    CHECK(rgb.r == static_cast<std::size_t>(4 * 2 * 6));
}

TEST_CASE("rgb_build_cr: full rank with exact delivery recomposes all channels") {
    Rng rng(8);
    std::array<Image, 3> x{oracle::random_image(5, rng), oracle::random_image(5, rng),
                           oracle::random_image(5, rng)};
    std::array<Image, 3> g{oracle::random_image(5, rng), oracle::random_image(5, rng),
                           oracle::random_image(5, rng)};
    const RgbPayload p = rgb_build_cr(x, g, 5);
    for (int c = 0; c < 3; ++c) {
        const Image out = recompose(p.basis, p.projected[c], g[c]);
        CHECK(achieved_mse(x[c], out).raw < 1e-10);
    }
}

TEST_CASE("rgb_build_cr: per-channel MSE equals the per-channel residual trace") {
    Rng rng(9);
    std::array<Image, 3> x{oracle::random_image(8, rng), oracle::random_image(8, rng),
                           oracle::random_image(8, rng)};
    std::array<Image, 3> g{oracle::random_image(8, rng), oracle::random_image(8, rng),
                           oracle::random_image(8, rng)};
    const int d = 3;
    const RgbPayload p = rgb_build_cr(x, g, d);
    for (int c = 0; c < 3; ++c) {
        const Image out = recompose(p.basis, p.projected[c], g[c]);
        const ErrorMatrix bc = error_matrix(x[c], g[c]);
        const double want = oracle::residual_trace(p.basis.rows, bc.entries);
        CHECK(achieved_mse(x[c], out).raw == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("rgb payload ratio uses the color accounting") {
    const Rational R(4, 5);
    const PayloadReport rep = payload_ratio(128, R, 28, 4, 3);
    // eta = (k/R + dL + 3 dL) / (3 L^2) = (160 + 4*112) / 2352
    CHECK(rep.eta == doctest::Approx((160.0 + 4.0 * 112.0) / 2352.0).epsilon(1e-12));
}
