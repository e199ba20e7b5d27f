#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace milattn {

// Deterministic RNG. std::mt19937_64 is bit-exact across platforms; the
// floating-point conversions are pinned here instead of going through
// std::uniform_real_distribution / std::normal_distribution, whose output
// sequences are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; second value cached.
  double normal();

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  uint64_t below(uint64_t n);

  // k distinct indices drawn uniformly from [0, n) by partial Fisher-Yates;
  // order of the draw is part of the deterministic contract.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace milattn
