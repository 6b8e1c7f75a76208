#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "softmark/rng.hpp"
#include "softmark/tensor.hpp"

namespace softmark {

// Samples stored as float rows; gather() returns double tensors.
struct Split {
  Shape sample_shape;
  std::vector<float> features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }
  Tensor gather(std::span<const std::size_t> idx) const;
  Tensor all() const;
  Split subset(std::span<const std::size_t> idx) const;
};

struct Normalization {
  std::vector<double> mean, stddev;  // per channel; empty for synthetic data
};

struct Augmentation {
  bool crop = false;  // 4-pixel zero pad, random 32x32 crop
  bool flip = false;  // random horizontal flip
};

struct DatasetHandle {
  std::string name;
  Split train, test;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  double subset_fraction = 1.0;
  Normalization normalization;
  Augmentation augmentation;
};

struct SynthOptions {
  std::size_t dim = 32;
  std::size_t classes = 5;
  double separation = 4.0;  // margin from each centre to any pairwise boundary, in noise std units
  std::size_t train = 5000;
  std::size_t test = 1000;
};

// Isotropic unit-variance Gaussian blobs. Centres are scaled orthonormal
// directions, so every pair of centres is 2 * separation apart.
DatasetHandle make_synth(const SynthOptions& opt, std::uint64_t seed);

// Names: synth5, cifar5, cifar10, cifar10_small, cifar100. CIFAR archives are
// read from the standard binary layout under data_root.
DatasetHandle load_dataset(const std::string& name, std::uint64_t seed, double subset_fraction = 1.0,
                           const std::filesystem::path& data_root = "data");

// Seeded per-class draw of round(fraction * class_count) records.
Split stratified_subsample(const Split& split, std::size_t num_classes, double fraction, std::uint64_t seed);

// Shuffled mini-batches of indices; a trailing batch of one sample is dropped
// because batch statistics need at least two rows.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

Tensor augment(const Tensor& images, const Augmentation& aug, Rng& rng);

}  // namespace softmark
