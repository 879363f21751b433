#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "transface/image.hpp"
#include "transface/tensor.hpp"

namespace transface {

struct ModelConfig {
  std::size_t image_side = 32;
  std::size_t channels = 3;
  std::size_t patch = 8;
  std::size_t dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  /// SE hidden width; 0 means "same as the patch count".
  std::size_t se_hidden = 0;
  std::size_t emb = 128;
  std::size_t classes = 8;
  double scale = 64.0;
  double margin = 0.5;
  /// Without SE the gate is fixed at 1 and no SE parameters exist.
  bool use_se = true;

  std::size_t num_patches() const;
  std::size_t se_width() const { return se_hidden ? se_hidden : num_patches(); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-sample token state: local tokens f, SE factors κ, gated tokens κ_i·f_i
/// and the concatenated global token.
struct TokenSet {
  Tensor tokens;
  Tensor kappa;
  Tensor gated;
  Tensor global;
};

struct ForwardResult {
  TokenSet tokens;
  Tensor embedding;
  Tensor cosines;
};

struct Linear {
  Tensor weight;  // [in × out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct EncoderBlock {
  LayerNormParams ln1;
  Linear qkv;
  Linear proj;
  LayerNormParams ln2;
  Linear fc1;
  Linear fc2;
};

class TransFaceModel {
 public:
  /// Truncated-normal(0.02) weights, zero biases, identity layer norms.
  TransFaceModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// [n × D] token matrix: linear projection of each flattened patch plus a
  /// learned position embedding.
  Tensor patch_embed(const Image& img) const;

  /// Pre-LN transformer blocks, no class token. When `attention` is given,
  /// each head's attention matrix is appended to it.
  Tensor encoder_forward(const Tensor& tokens, std::vector<Tensor>* attention = nullptr) const;

  /// Squeeze by per-token mean, excite with FC→ReLU→FC→sigmoid.
  /// Returns (κ [n], gated [n × D]).
  std::pair<Tensor, Tensor> se_forward(const Tensor& tokens) const;

  /// Face embedding: linear projection of the global token.
  Tensor embed(const Tensor& global) const;

  ForwardResult forward(const Image& img) const;

  const Tensor& class_weights() const { return arc_weight; }

  /// All learnable tensors in declaration order (the checkpoint order).
  std::vector<std::pair<std::string, Tensor>> parameters() const;

  PatchGrid patch_grid() const;

  // Parameter groups, public for tests that hand-set weights.
  Linear patch_proj;
  Tensor pos_embed;
  std::vector<EncoderBlock> blocks;
  Linear se_fc1;
  Linear se_fc2;
  Linear head;
  Tensor arc_weight;

 private:
  ModelConfig cfg_;
};

/// Row-major concatenation of the gated tokens, [n·D].
Tensor global_token(const Tensor& gated);

inline constexpr double kCosineClamp = 1.0 - 1e-7;

/// Additive angular margin loss on a vector of class cosines. The target
/// angle is θ_y + m; cosines are clamped to ±kCosineClamp first. For
/// θ_y > π - m the target logit is s·(cos θ_y - 1 + cos m), which keeps it
/// continuous and decreasing in θ_y.
Tensor arcface_from_cosines(const Tensor& cosines, std::size_t label, double s, double m);

/// Margin loss for an embedding against the columns of w [Emb × c].
Tensor arcface_loss(const Tensor& emb, std::size_t label, const Tensor& w, double s, double m);

/// Index of the largest cosine (lowest index on ties).
std::size_t predict(const Tensor& cosines);

// Checkpoint format (all little-endian):
//   "TFCK" u32 version
//   u32 image_side channels patch dim depth heads mlp_ratio se_hidden emb classes use_se
//   f64 scale margin
//   u32 tensor count, then per tensor: u32 rank, u32 dims[rank], f64 values
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TransFaceModel& model, const std::filesystem::path& path);
TransFaceModel load_checkpoint(const std::filesystem::path& path);
std::vector<char> serialize(const TransFaceModel& model);
TransFaceModel deserialize(const std::vector<char>& bytes);

}  // namespace transface
