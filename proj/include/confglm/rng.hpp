#pragma once

#include <cstdint>
#include <random>

namespace confglm {

// Deterministic RNG wrapper. Normal draws go through the inverse CDF so
// streams are bit-reproducible across platforms and standard libraries
// (std::normal_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Uniform on the open interval (0,1).
  double uniform();
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent substream for (seed, index) pairs; any subset of indexed
  // work units is reproducible in isolation.
  static std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace confglm
