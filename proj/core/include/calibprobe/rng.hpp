#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace calibprobe {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. The double/int mappings are written out by hand so
/// that sequences are identical on every platform; std::uniform_*_distribution
/// is implementation-defined and would break byte-identical reruns.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_index(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(engine_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Independent child stream; (seed, index) -> stream is a pure function, so
  /// per-sample streams stay identical regardless of scheduling.
  Rng derive(uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_) ^ splitmix64(index + 1)));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace calibprobe
