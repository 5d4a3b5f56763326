#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hsc/dataset.hpp"
#include "hsc/pipeline.hpp"

namespace hsc {

// Experiment configuration: plain key=value text file plus command-line
// overrides (see docs/config.md for the schema).
struct ExperimentConfig {
    std::string scenario = "fig2_vae"; // fig2_vae | fig2_vqvae | fig3_fixed_load | fig4_fading | custom
    int L = 28;
    int k = 128;
    double P = 1.0;
    std::vector<int> hidden = {2048, 1024, 512};
    std::vector<int> d_grid;             // default 0..L step 2
    std::vector<int> k_grid = {32, 64, 128, 256, 512};
    double snr_lo_db = 0.0;
    double snr_hi_db = 5.0;
    double snr_step_db = 0.5;
    std::string channel = "error_free"; // error_free | awgn | fading
    double mu = 1.0;
    std::uint64_t seed = 1;
    int trial_seeds = 3;   // independent evaluation seeds per point
    int eval_images = 100; // images averaged per point
    int train_images = 5000;
    int eval_count = 1000; // evaluation pool size
    int epochs = 20;
    int batch = 64;
    double lr = 1e-3;
    double beta_kl = 1e-3;
    int fig3_base_k = 32;
    // finetune / adapter settings
    int ft_budget = 200;
    int ft_epochs = 10;
    double ft_lr = 1e-4;
    // digital chain
    int bits_per_coeff = 8;
    bool cr_exact = false; // disable chain quantization
    // IO
    std::string dataset = "synth"; // "synth" or an IDX file (under HSC_DATA_ROOT)
    std::uint64_t dataset_seed = 424242;
    std::string out_dir = "out";
    std::string ckpt_dir = "out";
    bool timing = false; // write measured wall time into the CSV
    int workers = 2;
    int dump_count = 4;
    std::vector<int> dump_d = {0, 8, 16, 28};

    std::vector<int> effective_d_grid() const;
    std::vector<double> snr_grid() const;
    ChannelMode channel_mode() const;
    ChainSpec chain_spec() const;
};

ExperimentConfig load_config_file(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// One aggregated sweep point.
struct SweepRecord {
    std::string scenario;
    int d = 0;
    double eta = 0.0;
    double snr_db = 0.0;
    bool snr_applicable = true;
    double mse_generated = 0.0;
    double mse_recomposed = 0.0;
    double mse_closed_form = 0.0;
    double mse_generated_se = 0.0;
    double mse_recomposed_se = 0.0;
    std::uint64_t seed = 0;
    double wall_time = 0.0;
};

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRecord& r);

// Dataset resolution per the config (synthetic corpus or IDX file, honoring
// HSC_DATA_ROOT and the 50k/10k convention for full-size files).
DatasetSplit resolve_dataset(const ExperimentConfig& cfg);

// Checkpoint naming convention used by the CLI and the sweep runners.
std::string codec_ckpt_path(const ExperimentConfig& cfg, CodecVariant variant, int k);
std::string finetuned_ckpt_path(const ExperimentConfig& cfg, int k, std::uint64_t seed);
std::string adapters_ckpt_path(const ExperimentConfig& cfg, int k, std::uint64_t seed);

// Scenario runners append CSV rows (header included) to `out`. They throw
// std::runtime_error when a required checkpoint is missing.
void run_fig2(const ExperimentConfig& cfg, CodecVariant variant, std::ostream& out);
void run_fig3(const ExperimentConfig& cfg, std::ostream& out, std::ostream& summary);
void run_fig4(const ExperimentConfig& cfg, std::ostream& out);

// Image dumps (X, Xhat, Xtilde per requested d) as PGM files.
void run_dump(const ExperimentConfig& cfg);

// Bounded worker pool running `jobs` items; results collected in index
// order. Jobs must be independent (per-job seeding).
void parallel_for(int workers, std::size_t count, const std::function<void(std::size_t)>& job);

} // namespace hsc
