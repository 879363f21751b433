#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "gradcheck.hpp"
#include "transface/backbone.hpp"
#include "transface/dpap.hpp"
#include "transface/ehsm.hpp"

using namespace transface;
using transface::testing::grad_check;
using transface::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_side = 8;
  c.channels = 3;
  c.patch = 4;
  c.dim = 8;
  c.depth = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.emb = 6;
  c.classes = 3;
  return c;
}

Image random_image(Rng& rng, const ModelConfig& c) {
  Image img(c.channels, c.image_side, c.image_side);
  for (auto& p : img.pixels) p = rng.uniform(0.0, 1.0);
  return img;
}

void fill(Tensor t, double value) {
  for (auto& x : t.mutable_data()) x = value;
}

// Loss from cosines of a fixed angle set: target at θ_y, others at θ_o.
double arc_at(double theta_y, const std::vector<double>& others, double s, double m) {
  std::vector<double> cos{std::cos(theta_y)};
  for (double t : others) cos.push_back(std::cos(t));
  return arcface_from_cosines(Tensor::vector(cos), 0, s, m).item();
}

double softmax_ce(const std::vector<double>& logits, std::size_t y) {
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return -(logits[y] - mx - std::log(z));
}

}  // namespace

TEST(ModelConfig, PatchCountAndValidation) {
  ModelConfig c;
  EXPECT_EQ(c.num_patches(), 16u);
  EXPECT_EQ(c.se_width(), 16u);
  c.patch = 7;
  EXPECT_THROW(c.validate(), DimensionError);
  c = ModelConfig{};
  c.heads = 5;
  EXPECT_THROW(c.validate(), DimensionError);
  c = ModelConfig{};
  c.margin = 2.0;
  EXPECT_THROW(c.validate(), ContractError);
  c = ModelConfig{};
  c.classes = 1;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(PatchEmbed, ZeroImageGivesPositionEmbedding) {
  const TransFaceModel model(ModelConfig{}, 1);
  const Tensor t = model.patch_embed(Image(3, 32, 32));
  ASSERT_EQ(t.shape(), (Shape{16, 32}));
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(t[i], model.pos_embed[i]);
}

TEST(PatchEmbed, MatchesFlattenThenMatmul) {
  const ModelConfig c = tiny_config();
  const TransFaceModel model(c, 2);
  Rng rng(3);
  const Image img = random_image(rng, c);
  const Tensor t = model.patch_embed(img);
  const std::size_t len = c.channels * c.patch * c.patch;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t gy = i / 2, gx = i % 2;
    for (std::size_t d = 0; d < c.dim; ++d) {
      double acc = model.patch_proj.bias[d] + model.pos_embed.at(i, d);
      std::size_t k = 0;
      for (std::size_t ch = 0; ch < c.channels; ++ch)
        for (std::size_t y = 0; y < c.patch; ++y)
          for (std::size_t x = 0; x < c.patch; ++x, ++k)
            acc += img.at(ch, gy * c.patch + y, gx * c.patch + x) * model.patch_proj.weight.at(k, d);
      ASSERT_EQ(k, len);
      EXPECT_NEAR(t.at(i, d), acc, 1e-12);
    }
  }
  EXPECT_THROW(model.patch_embed(Image(3, 12, 12)), DimensionError);
}

TEST(Encoder, DepthZeroIsIdentity) {
  ModelConfig c = tiny_config();
  c.depth = 0;
  const TransFaceModel model(c, 4);
  Rng rng(5);
  const Tensor x = random_tensor(rng, {4, 8});
  const Tensor y = model.encoder_forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Encoder, AttentionRowsSumToOne) {
  const TransFaceModel model(ModelConfig{}, 6);
  Rng rng(7);
  std::vector<Tensor> att;
  model.encoder_forward(random_tensor(rng, {16, 32}), &att);
  ASSERT_EQ(att.size(), 2u * 4u);
  for (const auto& a : att)
    for (std::size_t r = 0; r < 16; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 16; ++c) s += a.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-10);
    }
}

TEST(Encoder, HandSetSingleHeadMatchesOracle) {
  ModelConfig c;
  c.image_side = 4;
  c.patch = 2;
  c.channels = 1;
  c.dim = 2;
  c.depth = 1;
  c.heads = 1;
  c.mlp_ratio = 1;
  TransFaceModel model(c, 8);
  auto& blk = model.blocks[0];
  const double wqkv[2][6] = {{1.0, 0.5, 0.2, -0.3, 2.0, 0.0}, {-0.4, 1.0, 0.7, 0.1, 1.0, -1.0}};
  auto w = blk.qkv.weight.mutable_data();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t k = 0; k < 6; ++k) w[r * 6 + k] = wqkv[r][k];
  auto pw = blk.proj.weight.mutable_data();
  pw[0] = 1.0, pw[1] = 0.0, pw[2] = 0.0, pw[3] = 1.0;
  fill(blk.fc2.weight, 0.0);

  const double x[2][2] = {{0.3, 1.1}, {-0.7, 0.2}};
  const Tensor in = Tensor::matrix(2, 2, {x[0][0], x[0][1], x[1][0], x[1][1]});
  const Tensor out = model.encoder_forward(in);

  // Layer norm of a 2-vector (a, b): ±(a-b)/2 / sqrt(((a-b)/2)² + ε).
  double ln[2][2];
  for (int r = 0; r < 2; ++r) {
    const double h = (x[r][0] - x[r][1]) / 2.0;
    const double s = std::sqrt(h * h + kLayerNormEps);
    ln[r][0] = h / s;
    ln[r][1] = -h / s;
  }
  double q[2][2], k[2][2], v[2][2];
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < 2; ++j) {
      q[r][j] = ln[r][0] * wqkv[0][j] + ln[r][1] * wqkv[1][j];
      k[r][j] = ln[r][0] * wqkv[0][2 + j] + ln[r][1] * wqkv[1][2 + j];
      v[r][j] = ln[r][0] * wqkv[0][4 + j] + ln[r][1] * wqkv[1][4 + j];
    }
  for (int r = 0; r < 2; ++r) {
    double s[2], z = 0.0;
    for (int j = 0; j < 2; ++j) {
      s[j] = std::exp((q[r][0] * k[j][0] + q[r][1] * k[j][1]) / std::sqrt(2.0));
      z += s[j];
    }
    for (int d = 0; d < 2; ++d) {
      const double att = (s[0] * v[0][d] + s[1] * v[1][d]) / z;
      EXPECT_NEAR(out.at(r, d), x[r][d] + att, 1e-12);
    }
  }
}

TEST(SqueezeExcite, SaturatedBiasPassesTokensThrough) {
  TransFaceModel model(ModelConfig{}, 9);
  fill(model.se_fc2.bias, 50.0);
  Rng rng(10);
  const Tensor tokens = random_tensor(rng, {16, 32});
  auto [kappa, gated] = model.se_forward(tokens);
  for (double k : kappa.data()) EXPECT_NEAR(k, 1.0, 1e-12);
  for (std::size_t i = 0; i < tokens.numel(); ++i) EXPECT_NEAR(gated[i], tokens[i], 1e-12);
}

TEST(SqueezeExcite, KappaInOpenUnitIntervalAndGatesRows) {
  const TransFaceModel model(ModelConfig{}, 11);
  Rng rng(12);
  const Tensor tokens = random_tensor(rng, {16, 32}, -3.0, 3.0);
  auto [kappa, gated] = model.se_forward(tokens);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_GT(kappa[i], 0.0);
    EXPECT_LT(kappa[i], 1.0);
    for (std::size_t d = 0; d < 32; ++d) EXPECT_EQ(gated.at(i, d), kappa[i] * tokens.at(i, d));
  }
}

TEST(SqueezeExcite, KappaDependsOnEveryToken) {
  const ModelConfig c = tiny_config();
  TransFaceModel model(c, 13);
  Rng rng(14);
  const Tensor tokens = random_tensor(rng, {4, 8});
  const Tensor base = model.se_forward(tokens).first;
  for (std::size_t row = 0; row < 4; ++row) {
    std::vector<double> v(tokens.data().begin(), tokens.data().end());
    for (std::size_t d = 0; d < 8; ++d) v[row * 8 + d] += 1e-3;
    const Tensor moved = model.se_forward(Tensor({4, 8}, v)).first;
    double change = 0.0;
    for (std::size_t j = 0; j < 4; ++j) change += std::abs(moved[j] - base[j]);
    EXPECT_GT(change, 0.0) << "token " << row;
  }
}

TEST(SqueezeExcite, DisabledMeansUnitGateAndNoParameters) {
  ModelConfig c;
  c.use_se = false;
  const TransFaceModel model(c, 15);
  Rng rng(16);
  const Tensor tokens = random_tensor(rng, {16, 32});
  auto [kappa, gated] = model.se_forward(tokens);
  for (double k : kappa.data()) EXPECT_EQ(k, 1.0);
  for (std::size_t i = 0; i < tokens.numel(); ++i) EXPECT_EQ(gated[i], tokens[i]);
  for (const auto& [name, t] : model.parameters()) EXPECT_EQ(name.rfind("se.", 0), std::string::npos);
}

TEST(SqueezeExcite, Fc1GradientMatchesFiniteDifferences) {
  const ModelConfig c = tiny_config();
  TransFaceModel model(c, 17);
  Rng rng(18);
  const Tensor tokens = random_tensor(rng, {4, 8});
  const auto r = grad_check(
      [&](const std::vector<Tensor>& x) {
        model.se_fc1.weight = x[0];
        const Tensor gated = model.se_forward(tokens).second;
        return sum(mul(gated, gated));
      },
      {model.se_fc1.weight});
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(GlobalToken, Examples) {
  const Tensor g = global_token(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(g.shape(), (Shape{4}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g[i], static_cast<double>(i + 1));
  Rng rng(19);
  const Tensor gated = random_tensor(rng, {5, 3});
  const Tensor flat = global_token(gated);
  EXPECT_EQ(flat.numel(), 15u);
  for (std::size_t r = 0; r < 5; ++r) {
    const Tensor part = slice(flat, 0, r * 3, (r + 1) * 3);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(part[d], gated.at(r, d));
  }
}

TEST(Embed, Examples) {
  ModelConfig c = tiny_config();
  c.emb = 4 * 8;
  TransFaceModel model(c, 20);
  Rng rng(21);
  const Tensor g = random_tensor(rng, {32});
  const Tensor e = model.embed(g);
  for (std::size_t j = 0; j < 32; ++j) {
    double acc = model.head.bias[j];
    for (std::size_t i = 0; i < 32; ++i) acc += g[i] * model.head.weight.at(i, j);
    EXPECT_NEAR(e[j], acc, 1e-12);
  }
  auto w = model.head.weight.mutable_data();
  for (std::size_t i = 0; i < 32; ++i)
    for (std::size_t j = 0; j < 32; ++j) w[i * 32 + j] = i == j ? 1.0 : 0.0;
  const Tensor id = model.embed(g);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(id[i], g[i]);
  fill(model.head.weight, 0.0);
  const Tensor zero = model.embed(g);
  for (double x : zero.data()) EXPECT_EQ(x, 0.0);
}

TEST(ArcFace, ClosedFormExample) {
  const Tensor emb = Tensor::vector({1.0, 0.0});
  const Tensor w = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
  const double loss = arcface_loss(emb, 0, w, 64.0, 0.5).item();
  EXPECT_LT(loss, 1e-20);
  // θ_y clamps to acos(1 - 1e-7) ≈ 4.5e-4; the value tracks 4.0e-25 within a few percent.
  EXPECT_NEAR(loss / 4.0e-25, 1.0, 0.1);
  EXPECT_THROW(arcface_loss(Tensor::zeros({2}), 0, w, 64.0, 0.5), ContractError);
  EXPECT_THROW(arcface_loss(emb, 2, w, 64.0, 0.5), ContractError);
}

TEST(ArcFace, NoMarginIsSoftmaxCrossEntropy) {
  Rng rng(22);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> cos(5);
    for (auto& c : cos) c = rng.uniform(-0.9, 0.9);
    const std::size_t y = rng.index(5);
    EXPECT_NEAR(arcface_from_cosines(Tensor::vector(cos), y, 1.0, 0.0).item(), softmax_ce(cos, y), 1e-12);
  }
}

TEST(ArcFace, InvariantToEmbeddingScale) {
  Rng rng(23);
  const Tensor emb = random_tensor(rng, {6});
  const Tensor w = random_tensor(rng, {6, 4});
  const double a = arcface_loss(emb, 1, w, 64.0, 0.5).item();
  const double b = arcface_loss(scale(emb, 37.5), 1, w, 64.0, 0.5).item();
  EXPECT_NEAR(a, b, 1e-9 * std::max(1.0, a));
}

TEST(ArcFace, StrictlyIncreasingInTargetAngle) {
  const double m = 0.5;
  Rng rng(24);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> others{rng.uniform(0.3, 2.8), rng.uniform(0.3, 2.8), rng.uniform(0.3, 2.8)};
    double prev = -1.0;
    for (double th = 0.01; th < std::numbers::pi - m; th += 0.01) {
      const double l = arc_at(th, others, 64.0, m);
      EXPECT_GT(l, prev) << "theta " << th;
      prev = l;
    }
  }
}

TEST(ArcFace, TargetLogitKeepsDecreasingPastPiMinusMargin) {
  const double m = 0.5;
  double prev = -1.0;
  for (double th = 0.05; th < std::numbers::pi - 0.01; th += 0.01) {
    const double l = arc_at(th, {1.0, 2.0}, 8.0, m);
    EXPECT_GT(l, prev) << "theta " << th;
    prev = l;
  }
  // Continuous at the switch point.
  const double edge = std::numbers::pi - m;
  EXPECT_NEAR(arc_at(edge - 1e-9, {1.0}, 8.0, m), arc_at(edge + 1e-9, {1.0}, 8.0, m), 1e-6);
}

TEST(ArcFace, MarginNeverLowersLoss) {
  Rng rng(25);
  for (int t = 0; t < 200; ++t) {
    const double th = rng.uniform(0.01, std::numbers::pi - 0.5 - 0.01);
    std::vector<double> others{rng.uniform(0.0, 3.1), rng.uniform(0.0, 3.1)};
    std::vector<double> logits{64.0 * std::cos(th)};
    for (double o : others) logits.push_back(64.0 * std::cos(o));
    EXPECT_GE(arc_at(th, others, 64.0, 0.5), softmax_ce(logits, 0) - 1e-12);
  }
}

TEST(ArcFace, GradientMatchesFiniteDifferences) {
  Rng rng(26);
  for (int t = 0; t < 5; ++t) {
    const auto r = grad_check(
        [](const std::vector<Tensor>& x) { return arcface_loss(x[0], 2, x[1], 8.0, 0.5); },
        {random_tensor(rng, {6}), random_tensor(rng, {6, 4})});
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(Predict, ArgmaxWithLowestIndexOnTies) {
  EXPECT_EQ(predict(Tensor::vector({0.1, 0.7, 0.7, -0.2})), 1u);
}

TEST(Model, EndToEndGradientCheck) {
  // n = 4 tokens, D = 8, depth 2: DPAP input, SE, ArcFace and η with γ = 0.1.
  ModelConfig c = tiny_config();
  c.scale = 64.0;
  c.margin = 0.5;
  TransFaceModel model(c, 27);
  Rng rng(28);
  const Image img = random_image(rng, c);
  const Image donor = random_image(rng, c);
  dpap::AugmentationConfig aug;
  aug.top_k = 2;
  aug.seed = 5;
  std::vector<double> kappa;
  {
    NoGradGuard g;
    const Tensor k = model.forward(img).tokens.kappa;
    kappa.assign(k.data().begin(), k.data().end());
  }
  const Image input = dpap::augment(img, model.patch_grid(), kappa, aug, donor);

  auto named = model.parameters();
  std::vector<Tensor> params;
  for (auto& [n, t] : named) params.push_back(t);
  auto loss_fn = [&](const std::vector<Tensor>&) {
    const ForwardResult fr = model.forward(input);
    const Tensor arc = arcface_from_cosines(fr.cosines, 1, c.scale, c.margin);
    const Tensor eta = ehsm::sample_weight(ehsm::token_information(fr.tokens.gated, ehsm::InfoMode::variance), 0.1);
    return ehsm::reweighted_loss(eta, arc);
  };
  // The loss reads parameters through the model, so they are the grad_check inputs.
  const auto r = grad_check(loss_fn, params);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(Model, ForwardIsDeterministic) {
  const TransFaceModel model(ModelConfig{}, 29);
  Rng rng(30);
  const Image img = random_image(rng, ModelConfig{});
  const auto a = model.forward(img), b = model.forward(img);
  for (std::size_t i = 0; i < a.embedding.numel(); ++i) EXPECT_EQ(a.embedding[i], b.embedding[i]);
  const TransFaceModel same(ModelConfig{}, 29);
  EXPECT_EQ(serialize(model), serialize(same));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig c = tiny_config();
  c.se_hidden = 3;
  const TransFaceModel model(c, 31);
  const auto bytes = serialize(model);
  const TransFaceModel back = deserialize(bytes);
  EXPECT_EQ(back.config(), c);
  EXPECT_EQ(serialize(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "transface_ckpt_test.tfck";
  save_checkpoint(model, path);
  EXPECT_EQ(serialize(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const TransFaceModel model(tiny_config(), 32);
  const auto bytes = serialize(model);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), DataError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize(bad_version), DataError);
  EXPECT_THROW(deserialize(std::vector<char>(bytes.begin(), bytes.end() - 3)), DataError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize(trailing), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.tfck"), DataError);
}

TEST(Checkpoint, HeaderLayout) {
  const TransFaceModel model(ModelConfig{}, 33);
  const auto bytes = serialize(model);
  ASSERT_GT(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "TFCK");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), kCheckpointVersion);
  std::size_t values = 0;
  for (const auto& [n, t] : model.parameters()) values += t.numel();
  const std::size_t header = 4 + 4 + 11 * 4 + 2 * 8 + 4;
  std::size_t shapes = 0;
  for (const auto& [n, t] : model.parameters()) shapes += 4 + 4 * t.rank();
  EXPECT_EQ(bytes.size(), header + shapes + 8 * values);
}
