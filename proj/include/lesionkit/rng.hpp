#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace lesionkit {

// Output mix of SplitMix64 (Steele, Lea & Flood; public domain reference
// implementation). Used for deriving independent sub-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for independent stream `index` of a master seed. Anything generated
// per-image or per-detector uses its own sub-stream, so parallel schedules
// cannot change results.
inline std::uint64_t derive_subseed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
}

// Deterministic generator built on std::mt19937_64 (the engine's output
// sequence is fixed by the ISO C++ specification, with a published 10000th
// default-seeded value). Distributions are implemented here rather than via
// <random>'s, whose sequences vary across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1): top 53 bits of one engine draw.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const int span = hi - lo + 1;
    return lo + static_cast<int>(uniform01() * span);
  }

  // Basic Box-Muller transform; consumes exactly two uniforms per sample.
  double gaussian(double mean, double sigma) {
    const double u1 = 1.0 - uniform01();  // (0,1], keeps the log finite
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + sigma * z;
  }

  // Knuth's multiplicative method; fine for the small rates used here.
  int poisson(double lambda) {
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform01();
    } while (p > limit);
    return k - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lesionkit
