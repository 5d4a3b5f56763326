#pragma once

#include <array>
#include <string>
#include <vector>

#include "hsc/recompose.hpp"
#include "hsc/rng.hpp"

namespace hsc {

// IDX image file (big-endian magic 0x00000803). Pixels are scaled to [0,1].
// Throws on bad magic, truncation, or non-square images.
std::vector<Image> load_idx_images(const std::string& path);

// Inverse of load_idx_images (pixels rounded to bytes).
void save_idx_images(const std::string& path, const std::vector<Image>& images);

// Train/eval split: first `train_count` images train, the rest evaluate.
struct DatasetSplit {
    std::vector<Image> train;
    std::vector<Image> eval;
};
DatasetSplit split_train_eval(std::vector<Image> all, std::size_t train_count);

// Deterministic procedural dataset of stroke glyphs: 10 recurring shape
// classes with per-sample affine jitter and intensity variation. Learnable
// structure at MNIST geometry (side x side in [0,1]).
std::vector<Image> synth_dataset(std::size_t count, int side, std::uint64_t seed);

// Plain binary portable graymap / pixmap, maxval 255.
void write_pgm(const std::string& path, const Matrix& pixels);
Matrix read_pgm(const std::string& path);
void write_ppm(const std::string& path, const std::array<Matrix, 3>& rgb);
std::array<Matrix, 3> read_ppm(const std::string& path);

} // namespace hsc
