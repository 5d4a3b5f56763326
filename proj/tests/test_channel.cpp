#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsc/channel.hpp"

using namespace hsc;

TEST_CASE("sample_fading: Monte-Carlo gain estimate") {
    Rng rng(42);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += std::norm(sample_fading(1.0, rng));
    const double mean = acc / n;
    CHECK(mean > 0.97);
    CHECK(mean < 1.03);
}

TEST_CASE("sample_fading: fixed seed reproducible, tiny mu shrinks h") {
    Rng a(7), b(7);
    CHECK(sample_fading(2.0, a) == sample_fading(2.0, b));

    Rng rng(8);
    CHECK(std::abs(sample_fading(1e-12, rng)) < 1e-4);

    CHECK_THROWS_AS(sample_fading(0.0, rng), std::invalid_argument);
}

TEST_CASE("snr_to_noise_power formula and inversion") {
    CHECK(snr_to_noise_power(0.0, {1.0, 0.0}, 1.0) == doctest::Approx(1.0));
    CHECK(snr_to_noise_power(10.0, {1.0, 0.0}, 1.0) == doctest::Approx(0.1));

    const cdouble h{0.3, -1.2};
    const double P = 2.5;
    const double snr = 7.25;
    const double sigma2 = snr_to_noise_power(snr, h, P);
    CHECK(std::abs(noise_power_to_snr(sigma2, h, P) - snr) < 1e-12);

    CHECK_THROWS_AS(snr_to_noise_power(0.0, {0.0, 0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("transmit: error-free identity and zero-noise passthrough") {
    Rng rng(1);
    const std::vector<cdouble> x{{0.5, -0.25}, {1.0, 2.0}};

    ChannelConfig error_free;
    error_free.mode = ChannelMode::ErrorFree;
    const ChannelRealization ef = realize_channel(error_free, rng);
    CHECK(transmit(x, ef, rng) == x);

    ChannelRealization manual;
    manual.mode = ChannelMode::AwgnOnly;
    manual.h = {1.0, 0.0};
    manual.sigma2 = 0.0;
    CHECK(transmit(x, manual, rng) == x);
}

TEST_CASE("transmit: empirical noise power") {
    Rng rng(99);
    ChannelRealization ch;
    ch.mode = ChannelMode::AwgnOnly;
    ch.h = {1.0, 0.0};
    ch.sigma2 = 1.0;
    const std::vector<cdouble> zeros(100000, cdouble{0.0, 0.0});
    const std::vector<cdouble> y = transmit(zeros, ch, rng);
    double acc = 0.0;
    for (const cdouble v : y) acc += std::norm(v);
    const double mean = acc / static_cast<double>(y.size());
    CHECK(mean > 0.97);
    CHECK(mean < 1.03);
}

TEST_CASE("equalize examples") {
    Rng rng(5);
    ChannelRealization ch;
    ch.mode = ChannelMode::SlowFading;
    ch.h = {2.0, 0.0};
    ch.sigma2 = 0.0;
    const std::vector<cdouble> y{{2.0, 0.0}};
    const std::vector<cdouble> x = equalize(y, ch);
    CHECK(std::abs(x[0] - cdouble{1.0, 0.0}) < 1e-15);

    // noiseless round trip
    const std::vector<cdouble> sent{{0.7, -0.1}, {-0.3, 0.9}};
    const std::vector<cdouble> rt = equalize(transmit(sent, ch, rng), ch);
    for (std::size_t i = 0; i < sent.size(); ++i) CHECK(std::abs(rt[i] - sent[i]) < 1e-12);

    ChannelRealization dead = ch;
    dead.h = {0.0, 0.0};
    CHECK_THROWS_AS(equalize(y, dead), std::invalid_argument);
}

TEST_CASE("equalize: noisy residual equals n / (h g)") {
    Rng rng(6);
    ChannelRealization ch;
    ch.mode = ChannelMode::SlowFading;
    ch.h = {0.8, -0.6};
    ch.sigma2 = 0.25;
    ch.P = 4.0;
    ch.scale_by_sqrt_power = true; // g = sqrt(P) = 2

    const std::vector<cdouble> sent{{1.0, 1.0}};
    Rng tx_rng(123);
    const std::vector<cdouble> y = transmit(sent, ch, tx_rng);

    // Re-derive the injected noise with an identical rng stream.
    Rng ref_rng(123);
    const cdouble noise = ref_rng.cnormal(1.0) * std::sqrt(ch.sigma2);
    const cdouble gain = ch.h * 2.0;

    const std::vector<cdouble> eq = equalize(y, ch);
    const cdouble residual = eq[0] - sent[0];
    CHECK(std::abs(residual - noise / gain) < 1e-12);
}

TEST_CASE("realize_channel: modes") {
    Rng rng(10);

    ChannelConfig cfg;
    cfg.mode = ChannelMode::ErrorFree;
    const ChannelRealization ef = realize_channel(cfg, rng);
    CHECK(ef.h == cdouble{1.0, 0.0});
    CHECK(ef.sigma2 == 0.0);

    cfg.mode = ChannelMode::AwgnOnly;
    cfg.snr_db = 20.0;
    const ChannelRealization awgn = realize_channel(cfg, rng);
    CHECK(awgn.h == cdouble{1.0, 0.0});
    CHECK(awgn.sigma2 == doctest::Approx(0.01));

    cfg.mode = ChannelMode::SlowFading;
    cfg.mu = 1.0;
    cfg.snr_db = 0.0;
    const ChannelRealization fad = realize_channel(cfg, rng);
    CHECK(fad.sigma2 == doctest::Approx(1.0)); // average-SNR convention
    CHECK(std::isfinite(fad.h.real()));
}

TEST_CASE("independent SR/CR streams from one seed") {
    Rng root(31337);
    Rng sr = root.stream("sr");
    Rng cr = root.stream("cr");
    // The streams must not produce the same sequence.
    bool differs = false;
    for (int i = 0; i < 8; ++i)
        if (sr.next_u64() != cr.next_u64()) differs = true;
    CHECK(differs);
}
