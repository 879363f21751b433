#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace transface {

/// splitmix64 finalizer; derives independent stream seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

/// Deterministic generator. Only the engine's bit stream is used, so draws are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  double normal();
  /// Normal(0, std) resampled until within two standard deviations.
  double truncated_normal(double std);
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace transface
