#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "transface/backbone.hpp"
#include "transface/dataset.hpp"
#include "transface/metrics.hpp"

namespace transface {

/// Embedding of an image, computed without gradient recording.
std::vector<double> embed_image(const TransFaceModel& model, const Image& img);

/// Cosine similarity of the two embeddings for every (a, b) index pair.
std::vector<double> pair_scores(const TransFaceModel& model, std::span<const ImageSample> images,
                                std::span<const std::pair<std::size_t, std::size_t>> pairs);

struct PairEvaluation {
  double accuracy = 0.0;
  double threshold = 0.0;
  std::vector<double> scores;
  std::vector<bool> same;
  std::vector<double> genuine;
  std::vector<double> impostor;
};

/// Scores and best-threshold accuracy over pairs of image files. Relative
/// paths resolve against `root`. Undecodable images raise DataError naming
/// the path.
PairEvaluation evaluate_pairs(const TransFaceModel& model, std::span<const VerificationPair> pairs,
                              const std::filesystem::path& root);

}  // namespace transface
