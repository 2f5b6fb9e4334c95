// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace uses {

// Deterministic RNG. std::mt19937_64 is fully specified by the standard, but
// the distribution adapters are not, so uniform/normal are implemented by
// hand to make every seeded run reproducible across compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform01() * static_cast<double>(hi - lo + 1));
  }

  // Box-Muller; draws two uniforms per call, no cached spare.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Derive an independent stream, e.g. per epoch or per example.
  Rng fork(uint64_t stream) {
    uint64_t s = next_u64();
    return Rng(s ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uses
