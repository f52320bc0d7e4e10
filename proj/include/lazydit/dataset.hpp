#pragma once

#include <cstdint>
#include <vector>

#include "lazydit/linalg.hpp"

namespace lazydit {

class Prng;

struct DataConfig {
  int patches = 8;
  int hidden = 16;
  int num_classes = 4;
  // Class means are N(0, mean_scale^2) per entry; samples add N(0, noise_scale^2).
  double mean_scale = 1.0;
  double noise_scale = 0.5;
};

// Per-class Gaussian mixture over N x D token matrices with a shared isotropic
// covariance.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  GaussianMixture(const DataConfig& config, std::uint64_t seed);

  const DataConfig& config() const noexcept { return config_; }
  const Mat& mean(int label) const { return means_.at(static_cast<std::size_t>(label)); }
  Mat sample(int label, Prng& rng) const;

 private:
  DataConfig config_;
  std::vector<Mat> means_;
};

struct Dataset {
  GaussianMixture source;
  std::vector<Mat> tokens;
  std::vector<int> labels;
};

// Labels are drawn uniformly; deterministic given (config, seed, size).
Dataset gen_synthetic_dataset(const DataConfig& config, std::uint64_t seed, std::size_t size);

}  // namespace lazydit
