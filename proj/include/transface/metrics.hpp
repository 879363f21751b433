#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace transface {

/// Cosine similarity of two equal-length vectors.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct PairAccuracy {
  double accuracy = 0.0;
  double threshold = 0.0;
};

/// Best verification accuracy over thresholds at the midpoints of the sorted
/// scores (plus both ends). A pair is accepted when score > threshold.
PairAccuracy best_threshold_accuracy(std::span<const double> scores, const std::vector<bool>& same);

struct TarAtFar {
  double tar = 0.0;
  /// Accept iff score ≥ threshold; -inf when every pair is accepted.
  double threshold = 0.0;
  /// far is below 1/|impostor|; the threshold sits just above the top impostor.
  bool saturated = false;
};

/// Exact empirical TAR at the smallest threshold whose impostor accept rate
/// does not exceed `far`.
TarAtFar tar_at_far(std::span<const double> genuine, std::span<const double> impostor, double far);

}  // namespace transface
