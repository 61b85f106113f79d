#pragma once

#include <cstdint>
#include <random>

namespace halo {

// Deterministic RNG for everything that draws randomness. All conversions to
// doubles/integers are done by hand so that streams are bit-identical across
// platforms (std::uniform_*_distribution is implementation-defined).
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), rejection-sampled so there is no modulo bias
  uint64_t uniform_int(uint64_t n);

  // standard normal, Box-Muller, one value per call
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream: mixes (seed, stream) through splitmix64.
  static uint64_t derive(uint64_t seed, uint64_t stream);

private:
  std::mt19937_64 gen_;
};

}  // namespace halo
