#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace fedfusion {

// Seed scrambler (Steele et al. splitmix64 finalizer).
std::uint64_t splitmix64(std::uint64_t x);

// Combines a base seed with stream identifiers so that derived streams
// (per client, per epoch, per sample) are decorrelated and reproducible.
std::uint64_t mix_seed(std::span<const std::uint64_t> parts);
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// Deterministic RNG. Distributions are implemented here rather than taken
// from <random> because the standard distribution algorithms are
// implementation-defined; mt19937_64 output itself is portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), unbiased. n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller (no spare caching: one value per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
  double gamma(double shape);

  // Fisher-Yates with this stream.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedfusion
