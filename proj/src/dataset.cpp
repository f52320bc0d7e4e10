#include "lazydit/dataset.hpp"

#include "lazydit/error.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {

GaussianMixture::GaussianMixture(const DataConfig& config, std::uint64_t seed) : config_(config) {
  if (config.patches < 1 || config.hidden < 1 || config.num_classes < 1) {
    throw DomainError("GaussianMixture: invalid shape");
  }
  if (!(config.noise_scale >= 0.0) || !(config.mean_scale >= 0.0)) {
    throw DomainError("GaussianMixture: scales must be non-negative");
  }
  Prng rng = Prng(seed).fork(0x6d65616e);
  means_.reserve(static_cast<std::size_t>(config.num_classes));
  for (int c = 0; c < config.num_classes; ++c) {
    means_.push_back(Mat::random_normal(static_cast<std::size_t>(config.patches),
                                        static_cast<std::size_t>(config.hidden), rng,
                                        config.mean_scale));
  }
}

Mat GaussianMixture::sample(int label, Prng& rng) const {
  Mat x = mean(label);
  for (double& v : x.data()) v += config_.noise_scale * rng.normal();
  return x;
}

Dataset gen_synthetic_dataset(const DataConfig& config, std::uint64_t seed, std::size_t size) {
  if (size == 0) throw DomainError("gen_synthetic_dataset: size must be >= 1");
  Dataset ds{GaussianMixture(config, seed), {}, {}};
  Prng rng = Prng(seed).fork(0x73616d70);
  ds.tokens.reserve(size);
  ds.labels.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_classes)));
    ds.labels.push_back(label);
    ds.tokens.push_back(ds.source.sample(label, rng));
  }
  return ds;
}

}  // namespace lazydit
