#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "transface/backbone.hpp"

namespace transface {

enum class EhsmMode {
  off,
  variance,  // per-token variance (default)
  entropy,   // per-token Gaussian entropy
  global,    // information of the concatenated global token only
};

std::string to_string(EhsmMode mode);
EhsmMode ehsm_mode_from_string(const std::string& name);

struct TrainConfig {
  ModelConfig model;

  std::size_t epochs = 200;
  std::size_t batch = 32;
  double lr = 1e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;

  bool dpap = true;
  double alpha = 1.0;
  /// 0 selects max(1, round(7·n/144)).
  std::size_t top_k = 0;

  EhsmMode ehsm = EhsmMode::variance;
  double gamma = 0.1;

  std::uint64_t seed = 0;

  std::size_t effective_top_k() const;
  void validate() const;
};

/// Every key accepted in config files and as `--key` CLI flags.
const std::vector<std::string>& config_keys();

/// Assigns one key. Unknown keys and unparsable values throw ContractError.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const TrainConfig& cfg, const std::string& key);

/// Applies a `key = value` file on top of `cfg`. Blank lines and lines
/// starting with '#' are skipped.
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);

/// Round-trippable `key = value` rendering.
std::string to_text(const TrainConfig& cfg);

}  // namespace transface
