#include "transface/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "transface/errors.hpp"

namespace transface {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw ContractError("cosine_similarity: zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

PairAccuracy best_threshold_accuracy(std::span<const double> scores, const std::vector<bool>& same) {
  if (scores.empty()) throw ContractError("best_threshold_accuracy: no pairs");
  if (scores.size() != same.size()) throw DimensionError("best_threshold_accuracy: size mismatch");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> candidates;
  candidates.push_back(sorted.front() - 1.0);
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i] != sorted[i + 1]) candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  candidates.push_back(sorted.back());

  PairAccuracy best{-1.0, 0.0};
  for (double t : candidates) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) correct += ((scores[i] > t) == same[i]);
    const double acc = static_cast<double>(correct) / static_cast<double>(scores.size());
    if (acc > best.accuracy) best = {acc, t};
  }
  return best;
}

TarAtFar tar_at_far(std::span<const double> genuine, std::span<const double> impostor, double far) {
  if (genuine.empty() || impostor.empty()) throw ContractError("tar_at_far: empty score list");
  if (!(far > 0.0 && far <= 1.0)) throw ContractError("tar_at_far: far must lie in (0, 1]");

  const std::size_t n = impostor.size();
  const double nd = static_cast<double>(n);
  // Largest number of accepted impostors k with k/n <= far.
  std::size_t k = static_cast<std::size_t>(std::floor(far * nd));
  k = std::min(k, n);
  while (k < n && static_cast<double>(k + 1) / nd <= far) ++k;
  while (k > 0 && static_cast<double>(k) / nd > far) --k;

  TarAtFar out;
  out.saturated = (k == 0);
  const auto genuine_n = static_cast<double>(genuine.size());
  if (k == n) {
    out.threshold = -std::numeric_limits<double>::infinity();
    out.tar = 1.0;
    return out;
  }
  std::vector<double> imp(impostor.begin(), impostor.end());
  std::nth_element(imp.begin(), imp.begin() + static_cast<std::ptrdiff_t>(k), imp.end(),
                   std::greater<double>());
  const double rejected = imp[k];
  out.threshold = std::nextafter(rejected, std::numeric_limits<double>::infinity());
  const auto accepted = std::count_if(genuine.begin(), genuine.end(),
                                      [&](double g) { return g > rejected; });
  out.tar = static_cast<double>(accepted) / genuine_n;
  return out;
}

}  // namespace transface
