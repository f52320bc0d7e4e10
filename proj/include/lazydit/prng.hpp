#pragma once

#include <array>
#include <cstdint>

namespace lazydit {

// xoshiro256** seeded through splitmix64. Identical streams on every platform:
// only integer arithmetic feeds the state, and doubles are built from the top
// 53 bits.
class Prng {
 public:
  explicit Prng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent substream derived from this generator's seed and a stream id.
  // Does not advance *this.
  Prng fork(std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lazydit
