#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "crbm/core.hpp"
#include "crbm/random.hpp"

namespace crbm {

/// N images of height x width pixels, one image per row (row-major pixel order).
struct ImageSet {
  using Pixels = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Pixels pixels;
  int height = 0;
  int width = 0;

  Eigen::Index size() const { return pixels.rows(); }
  Eigen::Index num_pixels() const { return pixels.cols(); }
  bool is_binary() const { return (pixels.array() <= 1).all(); }

  VectorXd image(Eigen::Index n) const { return pixels.row(n).transpose().cast<double>(); }
  void set_image(Eigen::Index n, const VectorXd& v);

  static ImageSet from_vectors(const std::vector<VectorXd>& images, int height, int width);
};

ImageSet read_idx(std::istream& in);
ImageSet load_idx(const std::string& path);
void write_idx(const std::string& path, const ImageSet& images);

/// "BINMAT01", u32 LE (N, H, W), then N*H*W bytes.
ImageSet read_raw(std::istream& in);
ImageSet load_raw(const std::string& path);
void write_raw(const std::string& path, const ImageSet& images);

/// Dispatches on the leading magic bytes (IDX or raw).
ImageSet load_images(const std::string& path);

/// pixel -> 1 iff value > threshold.
ImageSet binarize(const ImageSet& images, int threshold = 127);

enum class CorruptionKind { kFlip, kOcclude };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kFlip;
  double flipProb = 0.1;
  int patchH = 8;
  int patchW = 8;
  int fillValue = 0;
  std::uint64_t seed = 0;

  void validate(int height, int width) const;
};

/// Clean target v, corrupted input x, and the pixels the corruption changed.
struct StructuredPair {
  VectorXd v;
  VectorXd x;
  VectorXd changedMask;
};

StructuredPair corrupt_flip(const VectorXd& v, double flip_prob, Rng& rng);

struct PatchCorner {
  int row = 0;
  int col = 0;
};

/// Uniform top-left corner such that the patch lies inside the image.
PatchCorner draw_patch_corner(int height, int width, int patch_h, int patch_w, Rng& rng);

StructuredPair corrupt_occlude(const VectorXd& v, int height, int width, const CorruptionSpec& spec, Rng& rng);

/// Corrupts every image with an independent stream derived from (spec.seed, index).
std::vector<StructuredPair> corrupt_dataset(const ImageSet& clean, const CorruptionSpec& spec);

struct Metrics {
  double allErr = 0.0;      // percent of all pixels
  double changedErr = 0.0;  // percent of changed pixels; NaN when nothing changed
  std::size_t nInstances = 0;
};

/// Pooled error percentages over every pixel of every instance.
Metrics error_metrics(const std::vector<VectorXd>& predictions, const std::vector<StructuredPair>& pairs);

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Seeded permutation split; sizes must sum to n.
Split split(std::size_t n, const std::array<std::size_t, 3>& sizes, std::uint64_t seed);

ImageSet subset(const ImageSet& images, const std::vector<std::size_t>& indices);

/// Clean/corrupted/mask triplet stored as raw matrix files in one directory.
struct PairedFiles {
  ImageSet clean, corrupted, mask;
};

PairedFiles to_files(const std::vector<StructuredPair>& pairs, int height, int width);
std::vector<StructuredPair> from_files(const PairedFiles& files);
void save_pairs(const std::string& dir, const std::vector<StructuredPair>& pairs, int height, int width);
std::vector<StructuredPair> load_pairs(const std::string& dir, int* height = nullptr, int* width = nullptr);

/// Writes rows of equally sized binary/grayscale images as one PGM grid (1-pixel gutters).
void write_pgm_grid(const std::string& path, const std::vector<ImageSet>& rows, std::size_t max_columns = 16);

struct SyntheticSpec {
  int count = 1000;
  int height = 16;
  int width = 16;
  int strokes = 32;        // hidden units of the generating RBM
  double activeRate = 0.1; // prior probability of each stroke being drawn
  int gibbsSweeps = 5;
  std::uint64_t seed = 0;
};

/// Binary images sampled from a stroke-template RBM: each hidden unit owns one short line segment.
ImageSet synthetic_stroke_images(const SyntheticSpec& spec);

}  // namespace crbm
