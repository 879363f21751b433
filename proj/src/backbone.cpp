#include "transface/backbone.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "transface/rng.hpp"

namespace transface {

namespace {

constexpr double kInitStd = 0.02;

Tensor init_normal(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.truncated_normal(kInitStd);
  return Tensor(std::move(shape), std::move(v), true);
}

Linear make_linear(Rng& rng, std::size_t in, std::size_t out) {
  return Linear{init_normal(rng, {in, out}), Tensor::zeros({out}, true)};
}

LayerNormParams make_layernorm(std::size_t d) {
  return LayerNormParams{Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

}  // namespace

std::size_t ModelConfig::num_patches() const {
  const std::size_t g = patch ? image_side / patch : 0;
  return g * g;
}

void ModelConfig::validate() const {
  if (patch == 0 || image_side == 0 || image_side % patch != 0) {
    throw DimensionError("image side " + std::to_string(image_side) + " is not divisible by patch " +
                         std::to_string(patch));
  }
  if (channels == 0) throw DimensionError("channels must be positive");
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw DimensionError("token dim " + std::to_string(dim) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  }
  if (dim < 2) throw DimensionError("token dim must be >= 2");
  if (mlp_ratio == 0 || emb == 0) throw DimensionError("mlp ratio and embedding dim must be positive");
  if (!(scale > 0.0)) throw ContractError("ArcFace scale must be positive");
  if (!(margin > 0.0 && margin < std::numbers::pi / 2)) throw ContractError("ArcFace margin must lie in (0, pi/2)");
  if (classes < 2) throw ContractError("need at least 2 classes");
}

Tensor Linear::operator()(const Tensor& x) const {
  if (x.rank() == 1) {
    const std::size_t n = x.dim(0);
    return reshape(add_row(matmul(reshape(x, {1, n}), weight), bias), {bias.dim(0)});
  }
  return add_row(matmul(x, weight), bias);
}

TransFaceModel::TransFaceModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t n = cfg_.num_patches(), d = cfg_.dim;
  const std::size_t patch_len = cfg_.channels * cfg_.patch * cfg_.patch;
  patch_proj = make_linear(rng, patch_len, d);
  pos_embed = init_normal(rng, {n, d});
  for (std::size_t b = 0; b < cfg_.depth; ++b) {
    EncoderBlock blk;
    blk.ln1 = make_layernorm(d);
    blk.qkv = make_linear(rng, d, 3 * d);
    blk.proj = make_linear(rng, d, d);
    blk.ln2 = make_layernorm(d);
    blk.fc1 = make_linear(rng, d, d * cfg_.mlp_ratio);
    blk.fc2 = make_linear(rng, d * cfg_.mlp_ratio, d);
    blocks.push_back(std::move(blk));
  }
  if (cfg_.use_se) {
    se_fc1 = make_linear(rng, n, cfg_.se_width());
    se_fc2 = make_linear(rng, cfg_.se_width(), n);
  }
  head = make_linear(rng, n * d, cfg_.emb);
  arc_weight = init_normal(rng, {cfg_.emb, cfg_.classes});
}

PatchGrid TransFaceModel::patch_grid() const {
  return PatchGrid(cfg_.channels, cfg_.image_side, cfg_.image_side, cfg_.patch);
}

Tensor TransFaceModel::patch_embed(const Image& img) const {
  const PatchGrid grid = patch_grid();
  grid.check(img);
  std::vector<double> flat;
  flat.reserve(grid.count() * grid.patch_size());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto p = grid.extract(img, i);
    flat.insert(flat.end(), p.begin(), p.end());
  }
  const Tensor patches = Tensor::matrix(grid.count(), grid.patch_size(), std::move(flat));
  return add(patch_proj(patches), pos_embed);
}

Tensor TransFaceModel::encoder_forward(const Tensor& tokens, std::vector<Tensor>* attention) const {
  if (tokens.rank() != 2 || tokens.dim(1) != cfg_.dim) {
    throw DimensionError("encoder expects [n x " + std::to_string(cfg_.dim) + "], got " +
                         shape_string(tokens.shape()));
  }
  const std::size_t d = cfg_.dim, hd = d / cfg_.heads;
  Tensor x = tokens;
  for (const auto& blk : blocks) {
    const Tensor qkv = blk.qkv(layernorm(x, blk.ln1.gain, blk.ln1.bias));
    std::vector<Tensor> heads;
    heads.reserve(cfg_.heads);
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const Tensor q = slice(qkv, 1, h * hd, (h + 1) * hd);
      const Tensor k = slice(qkv, 1, d + h * hd, d + (h + 1) * hd);
      const Tensor v = slice(qkv, 1, 2 * d + h * hd, 2 * d + (h + 1) * hd);
      const Tensor w = attention_weights(q, k);
      if (attention) attention->push_back(w);
      heads.push_back(matmul(w, v));
    }
    x = add(x, blk.proj(concat(std::span<const Tensor>(heads), 1)));
    x = add(x, blk.fc2(gelu(blk.fc1(layernorm(x, blk.ln2.gain, blk.ln2.bias)))));
  }
  return x;
}

std::pair<Tensor, Tensor> TransFaceModel::se_forward(const Tensor& tokens) const {
  if (!cfg_.use_se) {
    const Tensor kappa = Tensor::full({tokens.dim(0)}, 1.0);
    return {kappa, tokens};
  }
  const Tensor squeezed = mean_last(tokens);
  const Tensor kappa = sigmoid(se_fc2(relu(se_fc1(squeezed))));
  return {kappa, scale_rows(tokens, kappa)};
}

Tensor TransFaceModel::embed(const Tensor& global) const { return head(global); }

ForwardResult TransFaceModel::forward(const Image& img) const {
  ForwardResult r;
  r.tokens.tokens = encoder_forward(patch_embed(img));
  auto [kappa, gated] = se_forward(r.tokens.tokens);
  r.tokens.kappa = kappa;
  r.tokens.gated = gated;
  r.tokens.global = global_token(gated);
  r.embedding = embed(r.tokens.global);
  r.cosines = cosine_to_columns(r.embedding, arc_weight);
  return r;
}

std::vector<std::pair<std::string, Tensor>> TransFaceModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto lin = [&](const std::string& name, const Linear& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
  };
  lin("patch_proj", patch_proj);
  out.emplace_back("pos_embed", pos_embed);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    const std::string p = "blocks." + std::to_string(b) + ".";
    out.emplace_back(p + "ln1.gain", blk.ln1.gain);
    out.emplace_back(p + "ln1.bias", blk.ln1.bias);
    lin(p + "qkv", blk.qkv);
    lin(p + "proj", blk.proj);
    out.emplace_back(p + "ln2.gain", blk.ln2.gain);
    out.emplace_back(p + "ln2.bias", blk.ln2.bias);
    lin(p + "fc1", blk.fc1);
    lin(p + "fc2", blk.fc2);
  }
  if (cfg_.use_se) {
    lin("se.fc1", se_fc1);
    lin("se.fc2", se_fc2);
  }
  lin("head", head);
  out.emplace_back("arc_weight", arc_weight);
  return out;
}

Tensor global_token(const Tensor& gated) {
  if (gated.rank() != 2) throw DimensionError("global_token expects [n x D], got " + shape_string(gated.shape()));
  return reshape(gated, {gated.numel()});
}

Tensor arcface_from_cosines(const Tensor& cosines, std::size_t label, double s, double m) {
  if (cosines.rank() != 1) throw DimensionError("arcface expects a cosine vector");
  const std::size_t c = cosines.dim(0);
  if (label >= c) throw ContractError("label " + std::to_string(label) + " out of range");
  const auto cs = cosines.data();
  std::vector<double> z(c), dz(c);
  for (std::size_t l = 0; l < c; ++l) {
    const double raw = cs[l];
    const double cl = std::clamp(raw, -kCosineClamp, kCosineClamp);
    const bool inside = raw > -kCosineClamp && raw < kCosineClamp;
    if (l == label && cl > std::cos(std::numbers::pi - m)) {
      const double theta = std::acos(cl);
      z[l] = s * std::cos(theta + m);
      dz[l] = inside ? s * std::sin(theta + m) / std::sin(theta) : 0.0;
    } else if (l == label) {
      // Past θ = π - m, cos(θ + m) turns upward; continue with a shifted cosine.
      z[l] = s * (cl - (1.0 - std::cos(m)));
      dz[l] = inside ? s : 0.0;
    } else {
      z[l] = s * cl;
      dz[l] = inside ? s : 0.0;
    }
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> prob(c);
  for (std::size_t l = 0; l < c; ++l) prob[l] = std::exp(z[l] - lse);
  // log1p form keeps tiny losses (≪ machine epsilon) representable.
  double others = 0.0;
  for (std::size_t l = 0; l < c; ++l)
    if (l != label) others += std::exp(z[l] - z[label]);
  const double loss = std::log1p(others);
  return Tensor::record(
      Shape{}, {loss}, {cosines},
      [label, prob = std::move(prob), dz = std::move(dz)](std::span<const double> go,
                                                          std::span<const std::span<double>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t l = 0; l < prob.size(); ++l) {
          const double dl = prob[l] - (l == label ? 1.0 : 0.0);
          gi[0][l] += go[0] * dl * dz[l];
        }
      });
}

Tensor arcface_loss(const Tensor& emb, std::size_t label, const Tensor& w, double s, double m) {
  return arcface_from_cosines(cosine_to_columns(emb, w), label, s, m);
}

std::size_t predict(const Tensor& cosines) {
  const auto c = cosines.data();
  return static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', 'K'};

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : bytes_(b) {}
  void take(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    take(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  double f64() {
    unsigned char b[8];
    take(b, 8);
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
    return std::bit_cast<double>(bits);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> serialize(const TransFaceModel& model) {
  const auto& c = model.config();
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  for (std::size_t v : {c.image_side, c.channels, c.patch, c.dim, c.depth, c.heads, c.mlp_ratio,
                        c.se_hidden, c.emb, c.classes}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  put_u32(out, c.use_se ? 1u : 0u);
  put_f64(out, c.scale);
  put_f64(out, c.margin);
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

TransFaceModel deserialize(const std::vector<char>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  for (std::size_t* field : {&c.image_side, &c.channels, &c.patch, &c.dim, &c.depth, &c.heads,
                             &c.mlp_ratio, &c.se_hidden, &c.emb, &c.classes}) {
    *field = r.u32();
  }
  c.use_se = r.u32() != 0;
  c.scale = r.f64();
  c.margin = r.f64();
  TransFaceModel model(c, 0);
  auto params = model.parameters();
  const auto count = r.u32();
  if (count != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_string(shape) +
                      ", expected " + shape_string(t.shape()));
    }
    for (auto& v : t.mutable_data()) v = r.f64();
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint payload");
  return model;
}

void save_checkpoint(const TransFaceModel& model, const std::filesystem::path& path) {
  const auto bytes = serialize(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

TransFaceModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace transface
