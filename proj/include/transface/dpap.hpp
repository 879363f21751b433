#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "transface/image.hpp"

namespace transface::dpap {

struct AugmentationConfig {
  std::size_t top_k = 1;
  /// λ ~ U(0, alpha); alpha ∈ (0, 1].
  double alpha = 1.0;
  std::uint64_t seed = 0;
  /// Clamp reconstructed pixels to [0, 1].
  bool clamp = true;
  /// Overrides every λ draw (the donor patch draw still happens).
  std::optional<double> forced_lambda;

  void validate(std::size_t patch_count) const;
};

/// What augment did, for logging and tests.
struct AugmentTrace {
  std::vector<std::size_t> dominant;
  std::vector<double> lambdas;
  std::vector<std::size_t> donor_patches;
  std::size_t clamped_pixels = 0;
};

/// Softmax of the raw SE scaling factors.
std::vector<double> normalize_scaling(std::span<const double> kappa);

/// Indices of the k largest scores, ties toward the smaller index, returned
/// in ascending index order.
std::vector<std::size_t> select_dominant(std::span<const double> scores, std::size_t k);

/// λ·a_dom + (1-λ)·a_rand, elementwise.
std::vector<double> mix_amplitude(std::span<const double> a_dom, std::span<const double> a_rand,
                                  double lambda);

/// Replaces the amplitude spectrum of each dominant patch (every channel
/// independently) with a mix against a randomly drawn patch of `donor`,
/// keeping the phase. Non-dominant patches are copied untouched.
Image augment(const Image& img, const PatchGrid& grid, std::span<const double> kappa,
              const AugmentationConfig& cfg, const Image& donor, AugmentTrace* trace = nullptr);

/// Number of augment calls in this process.
std::uint64_t invocation_count();

}  // namespace transface::dpap
