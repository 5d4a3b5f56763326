#pragma once

#include <map>
#include <string>
#include <vector>

#include "hsc/codec.hpp"
#include "hsc/digital.hpp"

namespace hsc {

// One shallow autoencoder adapter pair, specialized for a single CR rank d.
// Both sides are two-layer residual blocks initialized to the identity
// (second layer zero), so an untrained pair is a passthrough.
struct AdapterPair {
    int d = -1;
    Linear enc1, enc2; // SR side: 2k -> sr_hidden -> 2k
    Linear dec1, dec2; // image side: L^2 -> img_hidden -> L^2
};

struct AdapterConfig {
    int sr_hidden = 512;   // 2k -> sr_hidden -> 2k (256 -> 512 -> 256 reals at k = 128)
    int img_hidden = 1024; // L^2 -> img_hidden -> L^2
};

AdapterPair make_adapters(int d, int k, int L, const AdapterConfig& cfg, Rng& rng);

// SR-side adapter applied to the raw (pre-normalization) latent rows.
Matrix adapt_sr(const AdapterPair& p, const Matrix& z_rows);
// Image-side adapter applied to flattened generated-image rows.
Matrix adapt_image(const AdapterPair& p, const Matrix& x_rows);

// Registry mapping each trained d to exactly one pair. Lookup of an
// untrained d throws.
class AdapterRegistry {
public:
    void put(AdapterPair pair);
    const AdapterPair& at(int d) const;
    bool contains(int d) const { return pairs_.count(d) > 0; }
    std::vector<int> trained_ranks() const;
    std::size_t size() const { return pairs_.size(); }

private:
    std::map<int, AdapterPair> pairs_;
};

struct FinetuneConfig {
    double snr_lo_db = 0.0;
    double snr_hi_db = 5.0;
    double snr_step_db = 0.5;
    double mu = 1.0;
    int sample_budget = 200;
    int epochs = 10;
    int batch = 32;
    double lr = 1e-4;
    bool equalize = true;
    std::uint64_t seed = 7;

    std::vector<double> snr_grid() const;
};

// Few-shot fine-tuning of the (VAE) transceiver through sampled slow-fading
// realizations drawn from the configured SNR grid. Deterministic inference
// path (eps = 0); reconstruction loss only.
TrainResult finetune(SemanticCodec& codec, const std::vector<Image>& dataset,
                     const FinetuneConfig& cfg);

// NCR adapter training for a fixed d with the base transceiver frozen. The
// CR travels through the real digital chain and its own fading channel as a
// non-differentiated input; gradients reach the adapters through the
// generated-image branch of the recomposition (the projection basis is
// treated as a per-sample constant).
AdapterPair train_ncr_adapters(const SemanticCodec& frozen, int d,
                               const std::vector<Image>& dataset, const FinetuneConfig& cfg,
                               const ChainSpec& chain, const AdapterConfig& acfg = {});

// Adapter checkpoint: same container as the codec checkpoint, with one
// d-tagged block per stored pair (see docs/formats.md).
void save_adapters(const AdapterRegistry& reg, int k, int L, const std::string& path);
AdapterRegistry load_adapters(const std::string& path, int expect_k, int expect_L);

} // namespace hsc
