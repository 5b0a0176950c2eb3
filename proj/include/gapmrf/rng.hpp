#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gapmrf {

// Seeded RNG wrapper. The engine (mt19937_64) is fully specified by the
// standard; the distributions are hand-rolled because std:: distributions
// are implementation-defined and would break cross-toolchain determinism.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return eng_() % n; }

  // Standard normal via Box-Muller (pairs generated, second discarded so
  // the draw count per call is fixed).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // splitmix64 step; used to derive independent sub-seeds.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gapmrf
