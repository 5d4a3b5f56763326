#include "hsc/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace hsc {

cdouble sample_fading(double mu, Rng& rng) {
    if (mu <= 0.0) throw std::invalid_argument("sample_fading: mu must be positive");
    return rng.cnormal(mu);
}

double snr_to_noise_power(double snr_db, cdouble h, double P) {
    const double gain = std::norm(h);
    if (gain <= 0.0) throw std::invalid_argument("snr_to_noise_power: zero fading coefficient");
    if (P <= 0.0) throw std::invalid_argument("snr_to_noise_power: power must be positive");
    return gain * P / std::pow(10.0, snr_db / 10.0);
}

double noise_power_to_snr(double sigma2, cdouble h, double P) {
    const double gain = std::norm(h);
    if (gain <= 0.0) throw std::invalid_argument("noise_power_to_snr: zero fading coefficient");
    if (sigma2 <= 0.0) throw std::invalid_argument("noise_power_to_snr: noise power must be positive");
    return 10.0 * std::log10(gain * P / sigma2);
}

ChannelRealization realize_channel(const ChannelConfig& cfg, Rng& rng) {
    ChannelRealization ch;
    ch.mode = cfg.mode;
    ch.P = cfg.P;
    ch.mu = cfg.mu;
    ch.scale_by_sqrt_power = cfg.scale_by_sqrt_power;
    switch (cfg.mode) {
    case ChannelMode::ErrorFree:
        ch.h = {1.0, 0.0};
        ch.sigma2 = 0.0;
        break;
    case ChannelMode::AwgnOnly:
        ch.h = {1.0, 0.0};
        ch.sigma2 = snr_to_noise_power(cfg.snr_db, ch.h, cfg.P);
        break;
    case ChannelMode::SlowFading:
        ch.h = sample_fading(cfg.mu, rng);
        // Average-SNR convention: sigma^2 from the mean gain mu.
        ch.sigma2 = snr_to_noise_power(cfg.snr_db, cdouble{std::sqrt(cfg.mu), 0.0}, cfg.P);
        break;
    }
    return ch;
}

std::vector<cdouble> transmit(std::span<const cdouble> x, const ChannelRealization& ch, Rng& rng) {
    std::vector<cdouble> y(x.begin(), x.end());
    if (ch.mode == ChannelMode::ErrorFree) return y;
    const cdouble gain = ch.h * ch.amplitude_gain();
    const double sd = std::sqrt(ch.sigma2);
    for (cdouble& s : y) {
        s *= gain;
        if (ch.sigma2 > 0.0) s += rng.cnormal(1.0) * sd;
    }
    return y;
}

std::vector<cdouble> equalize(std::span<const cdouble> y, const ChannelRealization& ch) {
    std::vector<cdouble> x(y.begin(), y.end());
    if (ch.mode == ChannelMode::ErrorFree) return x;
    const cdouble gain = ch.h * ch.amplitude_gain();
    if (std::norm(gain) <= 0.0) throw std::invalid_argument("equalize: zero channel coefficient");
    for (cdouble& s : x) s /= gain;
    return x;
}

} // namespace hsc
