#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace zsad {

/// Platform-stable random source.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// derives every distribution by hand, because the standard distribution
/// classes are implementation-defined. Uniform doubles take the top 53 bits;
/// normals use the Box-Muller transform; bounded integers use rejection
/// sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finaliser applied to the combination of two values.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
/// 64-bit FNV-1a.
std::uint64_t hash_string(std::string_view s);

}  // namespace zsad
