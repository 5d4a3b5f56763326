#pragma once

#include <optional>

#include "hsc/adapt.hpp"
#include "hsc/codec.hpp"
#include "hsc/cr.hpp"
#include "hsc/digital.hpp"

namespace hsc {

// Configuration of one end-to-end transmission: SR and CR travel over two
// independently drawn channels; the CR either passes through the real
// digital chain or is delivered exactly (chain quantization disabled).
struct PipelineConfig {
    ChannelConfig sr_channel;
    ChannelConfig cr_channel;
    ChainSpec chain;
    bool cr_exact = false; // bypass the digital chain entirely
    bool equalize = true;
    const AdapterPair* adapters = nullptr;
};

// Receiver-side images for one transmitted source image.
struct PipelineImages {
    Image generated;  // Xhat (post-adapter when adapters are on)
    Image recomposed; // Xtilde
};

struct BatchEval {
    std::vector<double> mse_generated;   // per-pixel, one entry per image
    std::vector<double> mse_recomposed;
    std::vector<double> mse_closed_form; // tail sums from the transmitter spectrum

    double mean_generated() const;
    double mean_recomposed() const;
    double mean_closed_form() const;
    double se_generated() const;
    double se_recomposed() const;
};

// Batched evaluation: NN passes run over the whole image set at once, the
// per-image channel/chain/recomposition parts loop. Per-image randomness is
// derived from `rng` by image index, so results do not depend on batching.
// When `capture` is non-null the receiver images are stored there.
BatchEval eval_pipeline(const SemanticCodec& codec, const std::vector<Image>& images, int d,
                        const PipelineConfig& cfg, Rng& rng,
                        std::vector<PipelineImages>* capture = nullptr);

struct PipelineResult {
    Image generated;
    Image recomposed;
    double mse_generated = 0.0;
    double mse_recomposed = 0.0;
    double mse_closed_form = 0.0;
};

// Single-image convenience wrapper over eval_pipeline.
PipelineResult run_pipeline(const SemanticCodec& codec, const Image& x, int d,
                            const PipelineConfig& cfg, Rng& rng);

} // namespace hsc
