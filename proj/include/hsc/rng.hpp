#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace hsc {

// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
// the standard); the value mappings below are hand-rolled so that sequences
// are identical across standard library implementations, which the
// reproducibility guarantees rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), base_seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0,1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. No caching: two engine draws per value,
    // so stream state never depends on call parity.
    double normal() {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238463 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Circularly symmetric complex Gaussian CN(0, var): each component
    // N(0, var/2).
    std::complex<double> cnormal(double var = 1.0) {
        const double s = std::sqrt(var * 0.5);
        const double re = normal() * s;
        const double im = normal() * s;
        return {re, im};
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(engine_()) * n) >> 64);
    }

    // Derive an independently seeded substream. Distinct tags give streams
    // with unrelated seed material; reseeding is stateless with respect to
    // how much of this stream has been consumed.
    Rng stream(std::uint64_t tag) const { return Rng(splitmix(base_seed_ ^ splitmix(tag))); }

    Rng stream(std::string_view name) const {
        std::uint64_t h = 1469598103934665603ull; // FNV-1a
        for (const char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return stream(h);
    }

    std::uint64_t base_seed() const { return base_seed_; }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t base_seed_;
};

} // namespace hsc
