#pragma once

#include <array>
#include <span>
#include <vector>

#include "hsc/rational.hpp"
#include "hsc/recompose.hpp"

namespace hsc {

// Transmitter-side complementary payload: the optimal projection basis A and
// the projected source block A*X, r = 2dL reals in total.
struct ComplementaryPayload {
    ProjectionBasis basis;
    Matrix projected; // d x L = A * X
    std::size_t r = 0;
};

// Payload accounting for one (k, d) operating point. `channels` is 1 for
// grayscale and 3 for color (a single shared basis plus one projected block
// per channel).
struct PayloadReport {
    int k = 0;
    int d = 0;
    Rational R{4, 5};
    int L = 0;
    int channels = 1;
    double eta = 0.0;
};

// Basis from the top-d eigenvectors of the prediction-error matrix, plus the
// projected source rows. A zero error matrix yields the first d standard
// basis rows.
ComplementaryPayload build_cr(const Image& original, const Image& generated, int d);

// eta = (k/R + 2dL) / L^2 for grayscale; eta = (k/R + dL + C*dL) / (C*L^2)
// for C channels sharing one basis. Carried out in exact integer arithmetic
// up to the final division.
PayloadReport payload_ratio(int k, Rational R, int L, int d, int channels = 1);

// Largest d with eta < 1 (floored at 0 when even d = 0 is infeasible).
int max_feasible_d(int k, Rational R, int L, int channels = 1);

// Wire order: row-major A rows then row-major A*X rows (2dL reals).
std::vector<double> serialize_cr(const ComplementaryPayload& payload);

struct UnpackedCr {
    ProjectionBasis basis; // re-orthonormalized
    Matrix projected;
};

// Splits a received 2dL block and re-orthonormalizes the basis rows by
// modified Gram-Schmidt so the projector identities hold downstream even
// after channel noise. Rows that lose rank are replaced deterministically by
// the first standard basis vector independent of the rows kept so far.
UnpackedCr unpack_cr(std::span<const double> block, int d, int L);

// Color payload: one basis from the channel-averaged error matrix plus one
// projected block per channel; r = dL + 3dL.
struct RgbPayload {
    ProjectionBasis basis;
    std::array<Matrix, 3> projected;
    std::size_t r = 0;
};

RgbPayload rgb_build_cr(const std::array<Image, 3>& original,
                        const std::array<Image, 3>& generated, int d);

} // namespace hsc
