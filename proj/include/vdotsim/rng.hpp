#pragma once

#include <cstdint>
#include <random>

namespace vdotsim {

// Deterministic random source for benchmarks and model generation.
// mt19937_64's raw output sequence is pinned by the C++ standard; the
// derived draws below deliberately avoid std::*_distribution, whose
// results differ between standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t u64() { return eng_(); }
  int8_t i8() { return static_cast<int8_t>(eng_() & 0xFF); }

  // Uniform in [0, n). n must be positive.
  uint64_t index(uint64_t n) { return eng_() % n; }

  // Uniform in [0, 1) with 53 bits of entropy.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace vdotsim
