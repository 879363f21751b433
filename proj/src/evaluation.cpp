#include "transface/evaluation.hpp"

#include <map>
#include <string>

#include "transface/errors.hpp"

namespace transface {

std::vector<double> embed_image(const TransFaceModel& model, const Image& img) {
  NoGradGuard guard;
  const ForwardResult fr = model.forward(img);
  return {fr.embedding.data().begin(), fr.embedding.data().end()};
}

std::vector<double> pair_scores(const TransFaceModel& model, std::span<const ImageSample> images,
                                std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  std::vector<std::vector<double>> emb(images.size());
  auto get = [&](std::size_t i) -> const std::vector<double>& {
    if (i >= images.size()) throw DimensionError("pair_scores: image index out of range");
    if (emb[i].empty()) emb[i] = embed_image(model, images[i].image);
    return emb[i];
  };
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& [a, b] : pairs) scores.push_back(cosine_similarity(get(a), get(b)));
  return scores;
}

PairEvaluation evaluate_pairs(const TransFaceModel& model, std::span<const VerificationPair> pairs,
                              const std::filesystem::path& root) {
  if (pairs.empty()) throw DataError("evaluate_pairs: no pairs");
  const auto& mc = model.config();
  std::map<std::string, std::vector<double>> cache;
  auto embedding = [&](const std::string& rel) -> const std::vector<double>& {
    auto it = cache.find(rel);
    if (it != cache.end()) return it->second;
    const std::filesystem::path p =
        std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : root / rel;
    Image img;
    try {
      img = read_ppm(p);
    } catch (const std::exception& e) {
      throw DataError("cannot decode " + p.string() + ": " + e.what());
    }
    if (img.channels != mc.channels || img.height != mc.image_side || img.width != mc.image_side) {
      throw DataError(p.string() + ": image dimensions do not match the model");
    }
    return cache.emplace(rel, embed_image(model, img)).first->second;
  };

  PairEvaluation ev;
  for (const auto& pr : pairs) {
    const double s = cosine_similarity(embedding(pr.path_a), embedding(pr.path_b));
    ev.scores.push_back(s);
    ev.same.push_back(pr.same);
    (pr.same ? ev.genuine : ev.impostor).push_back(s);
  }
  const PairAccuracy acc = best_threshold_accuracy(ev.scores, ev.same);
  ev.accuracy = acc.accuracy;
  ev.threshold = acc.threshold;
  return ev;
}

}  // namespace transface
