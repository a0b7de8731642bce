#pragma once

#include <cmath>
#include <cstdint>

namespace tap {

/// SplitMix64 generator (Steele, Lea, Flood 2014). Chosen over std::mt19937
/// because its output is fully specified by three constants and therefore
/// reproducible across platforms and languages:
///   state += 0x9E3779B97F4A7C15
///   z = state; z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Multiply-shift, no modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  /// Standard normal via Box-Muller; second value cached.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// Mixes extra words into a seed so that (seed, a, b) pairs map to distinct
/// generator streams. Runs each word through one SplitMix64 step.
inline std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  SplitMix64 g(seed);
  std::uint64_t s = g.next();
  SplitMix64 ga(s ^ (a + 0x632BE59BD9B4E019ULL));
  s = ga.next();
  SplitMix64 gb(s ^ (b + 0x9E6C63D0876A9F77ULL));
  return gb.next();
}

}  // namespace tap
