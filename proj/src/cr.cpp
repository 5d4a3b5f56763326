#include "hsc/cr.hpp"

#include <cmath>

namespace hsc {

namespace {

ProjectionBasis basis_from_spectrum(const EigenSpectrum& spec, int d) {
    // A zero spectrum leaves the eigenvector order to round-off; emit the
    // standard basis for determinism (recomposition is exact regardless).
    double total = 0.0;
    for (const double v : spec.values) total += std::abs(v);
    if (total == 0.0) {
        const int l = spec.side();
        Matrix a(d, l);
        for (int i = 0; i < d; ++i) a(i, i) = 1.0;
        return ProjectionBasis(std::move(a));
    }
    return optimal_projection(spec, d);
}

} // namespace

ComplementaryPayload build_cr(const Image& original, const Image& generated, int d) {
    const int l = original.side();
    if (d < 0 || d > l) throw std::invalid_argument("build_cr: d out of range");

    ComplementaryPayload payload;
    payload.r = static_cast<std::size_t>(2) * d * l;
    if (d == 0) {
        payload.basis = ProjectionBasis(Matrix(0, l));
        payload.projected = Matrix(0, l);
        return payload;
    }

    const ErrorMatrix b = error_matrix(original, generated);
    const EigenSpectrum spec = eig_psd(b);
    payload.basis = basis_from_spectrum(spec, d);
    payload.projected = matmul(payload.basis.rows, original.pixels);
    return payload;
}

PayloadReport payload_ratio(int k, Rational R, int L, int d, int channels) {
    if (k < 0 || d < 0) throw std::invalid_argument("payload_ratio: negative k or d");
    if (L <= 0) throw std::invalid_argument("payload_ratio: L must be positive");
    if (R.num <= 0) throw std::invalid_argument("payload_ratio: R must be positive");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("payload_ratio: channels must be 1 or 3");

    PayloadReport rep;
    rep.k = k;
    rep.d = d;
    rep.R = R;
    rep.L = L;
    rep.channels = channels;

    // eta = (k/R + dL + C*dL) / (C*L^2); with C = 1 this is (k/R + 2dL)/L^2.
    // Numerator and denominator are kept integral: multiply through by
    // R.den to avoid k/R round-off.
    const std::int64_t cr_reals = static_cast<std::int64_t>(d) * L * (1 + channels);
    const std::int64_t num = static_cast<std::int64_t>(k) * R.den + cr_reals * R.num;
    const std::int64_t den = static_cast<std::int64_t>(channels) * L * L * R.num;
    rep.eta = static_cast<double>(num) / static_cast<double>(den);
    return rep;
}

int max_feasible_d(int k, Rational R, int L, int channels) {
    // eta < 1  <=>  k*den + (1+C) d L * num < C L^2 * num
    const std::int64_t lhs_const = static_cast<std::int64_t>(k) * R.den;
    const std::int64_t rhs = static_cast<std::int64_t>(channels) * L * L * R.num;
    const std::int64_t per_d = static_cast<std::int64_t>(1 + channels) * L * R.num;
    if (lhs_const >= rhs) return 0; // even d = 0 is infeasible; floor at 0
    std::int64_t d = (rhs - lhs_const - 1) / per_d; // largest d with strict inequality
    if (lhs_const + d * per_d >= rhs) --d;
    if (d < 0) d = 0;
    if (d > L) d = L;
    return static_cast<int>(d);
}

std::vector<double> serialize_cr(const ComplementaryPayload& payload) {
    const int d = payload.basis.rank();
    const int l = payload.basis.side();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(2) * d * l);
    for (int r = 0; r < d; ++r)
        out.insert(out.end(), payload.basis.rows.row(r).begin(), payload.basis.rows.row(r).end());
    for (int r = 0; r < d; ++r)
        out.insert(out.end(), payload.projected.row(r).begin(), payload.projected.row(r).end());
    return out;
}

namespace {

// Modified Gram-Schmidt with deterministic rank-loss fallback.
Matrix reorthonormalize(const Matrix& rows) {
    const int d = rows.rows();
    const int l = rows.cols();
    Matrix q = rows;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int c = 0; c < l; ++c) dot += q(i, c) * q(j, c);
            for (int c = 0; c < l; ++c) q(i, c) -= dot * q(j, c);
        }
        double norm2 = 0.0;
        for (int c = 0; c < l; ++c) norm2 += q(i, c) * q(i, c);
        if (norm2 < 1e-24) {
            // Degenerate row: substitute the first standard basis vector not
            // already spanned.
            for (int e = 0; e < l; ++e) {
                for (int c = 0; c < l; ++c) q(i, c) = (c == e) ? 1.0 : 0.0;
                for (int j = 0; j < i; ++j) {
                    double dot = 0.0;
                    for (int c = 0; c < l; ++c) dot += q(i, c) * q(j, c);
                    for (int c = 0; c < l; ++c) q(i, c) -= dot * q(j, c);
                }
                norm2 = 0.0;
                for (int c = 0; c < l; ++c) norm2 += q(i, c) * q(i, c);
                if (norm2 >= 1e-12) break;
            }
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (int c = 0; c < l; ++c) q(i, c) *= inv;
    }
    return q;
}

} // namespace

UnpackedCr unpack_cr(std::span<const double> block, int d, int L) {
    if (d < 0 || L <= 0 || d > L) throw std::invalid_argument("unpack_cr: bad dimensions");
    if (block.size() != static_cast<std::size_t>(2) * d * L)
        throw std::invalid_argument("unpack_cr: block length is not 2dL");

    UnpackedCr out;
    if (d == 0) {
        out.basis = ProjectionBasis(Matrix(0, L));
        out.projected = Matrix(0, L);
        return out;
    }

    Matrix a(d, L), ax(d, L);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < L; ++c) a(r, c) = block[static_cast<std::size_t>(r) * L + c];
    const std::size_t off = static_cast<std::size_t>(d) * L;
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < L; ++c) ax(r, c) = block[off + static_cast<std::size_t>(r) * L + c];

    out.basis = ProjectionBasis(reorthonormalize(a));
    out.projected = std::move(ax);
    return out;
}

RgbPayload rgb_build_cr(const std::array<Image, 3>& original,
                        const std::array<Image, 3>& generated, int d) {
    const int l = original[0].side();
    for (int c = 0; c < 3; ++c)
        if (original[c].side() != l || generated[c].side() != l)
            throw std::invalid_argument("rgb_build_cr: channel dimension mismatch");
    if (d < 0 || d > l) throw std::invalid_argument("rgb_build_cr: d out of range");

    std::vector<ErrorMatrix> per_channel;
    per_channel.reserve(3);
    for (int c = 0; c < 3; ++c) per_channel.push_back(error_matrix(original[c], generated[c]));
    const ErrorMatrix avg = average_error_matrix(per_channel);

    RgbPayload payload;
    payload.r = static_cast<std::size_t>(d) * l * 4; // dL for A + 3dL projected
    if (d == 0) {
        payload.basis = ProjectionBasis(Matrix(0, l));
        for (auto& m : payload.projected) m = Matrix(0, l);
        return payload;
    }

    payload.basis = basis_from_spectrum(eig_psd(avg), d);
    for (int c = 0; c < 3; ++c)
        payload.projected[c] = matmul(payload.basis.rows, original[c].pixels);
    return payload;
}

} // namespace hsc
