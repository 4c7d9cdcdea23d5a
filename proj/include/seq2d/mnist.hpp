#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seq2d/partition.hpp"
#include "seq2d/train.hpp"

namespace seq2d {

/// Decoded image set: pixels are doubles (raw decode maps byte/255 into
/// [0, 1]), labels are digits 0..9. `transforms` records the applied
/// pipeline stages in order.
struct ImageSet {
  int count = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // count * height * width, row-major per image
  std::vector<uint8_t> labels;
  std::vector<std::string> sources;
  std::vector<std::string> transforms;

  double& at(int image, int row, int col) {
    return pixels[(static_cast<size_t>(image) * height + row) * width + col];
  }
  double at(int image, int row, int col) const {
    return pixels[(static_cast<size_t>(image) * height + row) * width + col];
  }
};

/// Reads an IDX image/label file pair (plain or gzip, detected by magic
/// bytes). Image magic 0x00000803, label magic 0x00000801; counts must
/// match across the two files.
ImageSet load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes the set back out as IDX ubyte files (pixels are rounded to
/// byte/255 levels; intended for raw, un-normalized sets).
void write_idx(const ImageSet& set, const std::string& images_path,
               const std::string& labels_path);

/// Bilinear resize with sample centers at (i + 0.5) * scale - 0.5, clamped.
ImageSet resize_bilinear(const ImageSet& set, int out_h, int out_w);

/// pixel -> (pixel - mean) / std.
ImageSet normalize(const ImageSet& set, double mean, double std_dev);

/// Zeroes one axis-aligned rectangle per image with area fraction uniform
/// in [lo, hi] and aspect ratio uniform in [1/3, 3]; deterministic per
/// (seed, image index). Applied before normalization.
ImageSet random_erase(const ImageSet& set, double lo, double hi, uint64_t seed);

/// Stand-in for the perspective augmentation: records the stage and leaves
/// pixels untouched.
ImageSet perspective_noop(const ImageSet& set);

struct SplitSpec {
  int train = 0;
  int val = 0;
  int test = 0;
  uint64_t seed = 0;
};

struct Splits {
  ImageSet train;
  ImageSet val;
  ImageSet test;
};

/// Disjoint seeded splits; train + val + test must not exceed the set size.
Splits split(const ImageSet& set, const SplitSpec& spec);

/// Batches of states whose leading entries hold the row-major flattened
/// image and whose remaining blocks are zero. The image size must equal a
/// prefix of the partition's blocks; the last partial batch is kept.
std::vector<std::pair<StateBatch, std::vector<int>>> to_state_batches(
    const ImageSet& set, const BlockPartition& partition, int batch_size);

/// Column-per-example view used by the training loop.
Dataset to_dataset(const ImageSet& set);

/// Deterministic corpus of digit-like glyph images (jittered, noisy
/// renderings of ten fixed glyphs), for running the pipeline where the
/// real handwritten corpus is unavailable.
ImageSet synth_digits(int count, int height, int width, uint64_t seed);

}  // namespace seq2d
