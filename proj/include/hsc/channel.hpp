#pragma once

#include <complex>
#include <span>
#include <vector>

#include "hsc/rng.hpp"

namespace hsc {

using cdouble = std::complex<double>;

enum class ChannelMode {
    ErrorFree, // sigma^2 -> 0, h -> 1: output equals input
    AwgnOnly,  // h = 1, additive noise at the configured SNR
    SlowFading // h ~ CN(0, mu) drawn once per block, plus additive noise
};

// One channel draw: everything needed to push a symbol block through the
// channel and undo the deterministic part at the receiver.
struct ChannelRealization {
    ChannelMode mode = ChannelMode::ErrorFree;
    cdouble h{1.0, 0.0};  // fading coefficient
    double sigma2 = 0.0;  // noise power
    double P = 1.0;       // nominal transmit power
    double mu = 1.0;      // average channel gain E|h|^2
    // Multiply the input by sqrt(P) inside the channel (the literal system
    // equation). Off by default: the power constraint is already applied at
    // normalization, so the channel gain factor is h alone.
    bool scale_by_sqrt_power = false;

    double amplitude_gain() const {
        return scale_by_sqrt_power ? std::sqrt(P) : 1.0;
    }
};

struct ChannelConfig {
    ChannelMode mode = ChannelMode::ErrorFree;
    double snr_db = 10.0; // average SNR in dB (ignored for ErrorFree)
    double mu = 1.0;
    double P = 1.0;
    bool scale_by_sqrt_power = false;
};

// h ~ CN(0, mu): each component N(0, mu/2), so E|h|^2 = mu.
cdouble sample_fading(double mu, Rng& rng);

// sigma^2 = |h|^2 P / 10^(snr_db/10).
double snr_to_noise_power(double snr_db, cdouble h, double P);
double noise_power_to_snr(double sigma2, cdouble h, double P);

// Draw one realization. For SlowFading the noise power is set from the
// AVERAGE gain mu (average-SNR convention), not the instantaneous |h|^2.
ChannelRealization realize_channel(const ChannelConfig& cfg, Rng& rng);

// y = h * g * x + n with n ~ CN(0, sigma2) i.i.d., g the amplitude gain.
// ErrorFree returns the input unchanged.
std::vector<cdouble> transmit(std::span<const cdouble> x, const ChannelRealization& ch, Rng& rng);

// Coherent equalization y / (h * g); identity for ErrorFree.
std::vector<cdouble> equalize(std::span<const cdouble> y, const ChannelRealization& ch);

} // namespace hsc
