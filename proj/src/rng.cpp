#include "halo/rng.hpp"

#include <cmath>

#include "halo/common.hpp"

namespace halo {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

uint64_t Rng::uniform_int(uint64_t n) {
  require(n > 0, Err::InvalidParameter, "uniform_int: n must be positive");
  const uint64_t min = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    uint64_t x = next_u64();
    if (x >= min) return x % n;
  }
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

uint64_t Rng::derive(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace halo
