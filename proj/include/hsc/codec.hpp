#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsc/channel.hpp"
#include "hsc/nn.hpp"
#include "hsc/recompose.hpp"

namespace hsc {

// k complex channel-input symbols. After power normalization the block
// satisfies ||z||^2 = k*P exactly (up to floating-point rounding).
struct SemanticSignal {
    std::vector<cdouble> symbols;
    int k() const { return static_cast<int>(symbols.size()); }
};

// The two parallel encoder heads interpreted as complex vectors: mean and
// per-component scale (the scale head emits log-variances; scale components
// are exp(logvar/2) and therefore positive).
struct EncoderOutput {
    std::vector<cdouble> mean;
    std::vector<cdouble> scale;
};

// Trainable codebook: `size` vectors of k complex values each, stored as
// rows of 2k interleaved reals.
struct Codebook {
    Matrix entries; // size x 2k

    int size() const { return entries.rows(); }
    int dim() const { return entries.cols(); }
};

struct VqResult {
    int index = 0;
    std::vector<cdouble> codeword;
};

enum class CodecVariant : std::uint8_t { Vae = 0, VqVae = 1 };

struct CodecSpec {
    int L = 28;
    int k = 128;
    std::vector<int> hidden = {2048, 1024, 512};
    double P = 1.0;
    int codebook_size = 256; // VQ-VAE only
};

// Interleaving convention used throughout: real component of complex dim c
// at index 2c, imaginary at 2c+1.
std::vector<double> complex_to_reals(std::span<const cdouble> z);
std::vector<cdouble> reals_to_complex(std::span<const double> v);

// z_bar = mean + eps (.) scale, element-wise complex multiplication.
std::vector<cdouble> reparameterize(const EncoderOutput& out, std::span<const cdouble> eps);
// Literal single-draw reading: one eps shared by every dimension.
std::vector<cdouble> reparameterize(const EncoderOutput& out, cdouble eps);

// z = sqrt(kP) * raw / ||raw||_2.
SemanticSignal power_normalize(std::span<const cdouble> raw, double P);

// Nearest codeword in Euclidean norm; ties break to the lowest index.
VqResult vq_quantize(std::span<const cdouble> raw, const Codebook& book);

// MLP transceiver: encoder trunk + parallel heads, mirrored decoder, and an
// optional codebook for the vector-quantized variant.
struct SemanticCodec {
    CodecSpec spec;
    CodecVariant variant = CodecVariant::Vae;
    Mlp encoder_trunk;  // L^2 -> hidden (ReLU each)
    Linear mean_head;   // hidden.back() -> 2k
    Linear logvar_head; // hidden.back() -> 2k (VAE only)
    Mlp decoder;        // 2k -> reversed hidden -> L^2, sigmoid output
    Codebook codebook;  // VQ-VAE only

    static SemanticCodec create(const CodecSpec& spec, CodecVariant variant, Rng& rng);

    EncoderOutput encode(const Image& image) const;
    Image decode(std::span<const cdouble> received) const;

    // Deterministic transmitter-side signal: eps = 0, so z_bar = mean (VAE)
    // or the quantized codeword (VQ-VAE), then power normalization.
    SemanticSignal encode_signal(const Image& image) const;

    // Batched inference helpers (rows = images, flattened row-major).
    Matrix encode_mean_batch(const Matrix& x) const;
    Matrix decode_batch(const Matrix& z) const;

    std::size_t param_count() const;
};

struct TrainConfig {
    int epochs = 20;
    int batch = 64;
    double lr = 1e-3;
    double beta_kl = 1e-3;
    double commitment = 0.25; // VQ-VAE commitment weight
    bool strict_scalar_eps = false;
    std::uint64_t seed = 1;
};

struct EpochStats {
    double recon = 0.0; // per-pixel reconstruction MSE
    double kl = 0.0;    // mean KL term (VAE)
    double vq = 0.0;    // mean quantization error (VQ-VAE)
    double total = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> epochs;
    double dead_codeword_fraction = 0.0; // VQ-VAE: unused codewords, last epoch
};

// ELBO training over an idealized error-free channel: per-pixel MSE plus
// beta * analytic KL to the unit Gaussian. Throws NumericalError on NaN loss.
TrainResult train_elbo(SemanticCodec& codec, const std::vector<Image>& dataset,
                       const TrainConfig& cfg);

// VQ-VAE training: straight-through estimator, codebook + commitment losses.
TrainResult train_vqvae(SemanticCodec& codec, const std::vector<Image>& dataset,
                        const TrainConfig& cfg);

// Closed-form KL(N(m, s^2) || N(0, 1)) per dimension.
inline double kl_gaussian(double m, double s) {
    return 0.5 * (m * m + s * s - 1.0 - std::log(s * s));
}

// Backprop vs central finite differences (step 1e-5) on the full VAE loss.
// Returns the maximum relative disagreement across all parameters.
double grad_check(SemanticCodec& codec, const Image& image, std::uint64_t seed);

// Versioned checkpoint ("HSCM"): architecture descriptor followed by the
// little-endian 64-bit float weights in layer order, plus an optional
// codebook block. Layout documented in docs/formats.md.
void save_checkpoint(const SemanticCodec& codec, const std::string& path);
SemanticCodec load_checkpoint(const std::string& path);

} // namespace hsc
