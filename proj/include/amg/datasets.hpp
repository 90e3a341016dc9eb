#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "amg/rng.hpp"
#include "amg/training.hpp"

namespace amg {

struct IdxHeader {
  std::uint32_t magic = 0;            // 2051 images, 2049 labels
  std::vector<std::uint32_t> dims;    // count first
};

/// Reads the big-endian IDX header only.
IdxHeader read_idx_header(const std::filesystem::path& path);

/// Parses an IDX image/label pair. Pixels are scaled to [0,1] and shaped (N, 1, rows, cols).
/// Throws FormatError (with byte offset) on bad magic, inconsistent counts or truncation.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct MnistSplits {
  LabeledDataset train;
  LabeledDataset test;
};

/// Loads train-*/t10k-* IDX files from `dir`.
MnistSplits load_mnist(const std::filesystem::path& dir);

/// Two isotropic Gaussian classes. The Bayes-optimal boundary is the perpendicular bisector
/// of the means: normal . x + offset = 0, positive on the class-1 side.
struct BlobsTask {
  LabeledDataset data;
  Tensor mean0;
  Tensor mean1;
  Tensor normal;  // unit vector from mean0 towards mean1
  double offset = 0.0;
  double spread = 1.0;

  /// Accuracy of the optimal linear rule, Phi(separation / 2).
  double bayes_accuracy() const;
};

/// `separation` is the distance between the means in units of `spread`.
BlobsTask make_blobs(std::size_t n, std::size_t dims, double separation, Rng& rng, double spread = 1.0,
                     double center = 0.0);

}  // namespace amg
