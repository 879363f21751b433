#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "transface/config.hpp"
#include "transface/image.hpp"

namespace transface {

enum class AblationMode { baseline, se, dpap, full, ehsm_global };

/// Names: baseline, +SE, +DPAP, full, EHSM-global.
std::string to_string(AblationMode mode);
/// Throws ContractError on an unknown name.
AblationMode ablation_mode_from_string(const std::string& name);
const std::vector<AblationMode>& default_ablation_modes();

/// `base` with the components of `mode` switched on or off.
TrainConfig ablation_config(const TrainConfig& base, AblationMode mode);

struct AblationRow {
  AblationMode mode = AblationMode::baseline;
  std::size_t epochs_run = 0;
  double final_arc_loss = 0.0;
  double train_accuracy = 0.0;
  double token_entropy = 0.0;
  double mean_eta = 0.0;
  /// Verification accuracy on held-out pairs; negative when none were given.
  double pair_accuracy = -1.0;
  std::uint64_t dpap_calls = 0;
  std::uint64_t ehsm_calls = 0;
  double seconds = 0.0;
};

struct PairSet {
  std::span<const ImageSample> images;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> same;
};

std::vector<AblationRow> run_ablation(const TrainConfig& base, std::span<const AblationMode> modes,
                                      std::span<const ImageSample> train_set,
                                      const PairSet* eval = nullptr);

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);

}  // namespace transface
