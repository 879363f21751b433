#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transface/backbone.hpp"
#include "transface/config.hpp"
#include "transface/dpap.hpp"
#include "transface/image.hpp"

namespace transface {

struct TrainRecord {
  std::size_t epoch = 0;
  double arc_loss = 0.0;
  double mean_eta = 0.0;
  /// Mean per-token Gaussian entropy of the clean gated tokens.
  double token_entropy = 0.0;
  double train_accuracy = 0.0;
  double seconds = 0.0;
};

void write_records_csv(std::ostream& os, std::span<const TrainRecord> records);

struct TrainHooks {
  /// Called after every epoch. Returning false stops training early.
  std::function<bool(const TrainRecord&)> on_epoch;
};

struct TrainResult {
  TransFaceModel model;
  std::vector<TrainRecord> records;
  /// Clean-pass accuracy and mean Gaussian token entropy after the last step.
  double final_accuracy = 0.0;
  double final_entropy = 0.0;
};

/// Seed used to draw the initial model weights.
std::uint64_t model_seed(std::uint64_t train_seed);

/// DPAP settings for one sample in one epoch. Depends only on the run seed,
/// the epoch and the sample's own seed.
dpap::AugmentationConfig augmentation_for(const TrainConfig& cfg, std::size_t epoch,
                                          std::uint64_t sample_seed);

/// Sample order for an epoch.
std::vector<std::size_t> epoch_order(std::uint64_t train_seed, std::size_t epoch, std::size_t n);

/// Per-sample training loss: ArcFace on the augmented image, reweighted by η
/// unless EHSM is off. `eta_out` and `arc_out` receive the detached factors.
Tensor sample_loss(const TransFaceModel& model, const TrainConfig& cfg, const Image& input,
                   std::size_t label, double* eta_out = nullptr, double* arc_out = nullptr);

/// Raises NumericalError naming the first non-finite tensor among `named`.
void check_finite(std::span<const std::pair<std::string, Tensor>> named, bool check_grads);

TrainResult train(const TrainConfig& cfg, std::span<const ImageSample> samples,
                  const TrainHooks& hooks = {});

struct CleanStats {
  double accuracy = 0.0;
  double token_entropy = 0.0;
};

/// Clean forward over every sample without gradient recording.
CleanStats evaluate_clean(const TransFaceModel& model, std::span<const ImageSample> samples);

}  // namespace transface
