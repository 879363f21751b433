#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "transface/dpap.hpp"
#include "transface/errors.hpp"
#include "transface/rng.hpp"

using namespace transface;
using namespace transface::dpap;

namespace {

Image random_image(Rng& rng, std::size_t c, std::size_t side, double lo = 0.2, double hi = 0.8) {
  Image img(c, side, side);
  for (auto& p : img.pixels) p = rng.uniform(lo, hi);
  return img;
}

std::vector<double> random_kappa(Rng& rng, std::size_t n) {
  std::vector<double> k(n);
  for (auto& x : k) x = rng.uniform(0.01, 0.99);
  return k;
}

std::vector<std::size_t> sort_oracle(const std::vector<double>& d, std::size_t k) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double wrap(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

bool in_patch(const PatchGrid& g, std::size_t index, std::size_t y, std::size_t x) {
  const std::size_t p = g.patch_side();
  return y / p == index / g.grid_cols() && x / p == index % g.grid_cols();
}

}  // namespace

TEST(PatchGrid, ReassembleIsExactInverse) {
  Rng rng(31);
  const Image img = random_image(rng, 3, 16, 0.0, 1.0);
  const PatchGrid g = PatchGrid::for_image(img, 4);
  EXPECT_EQ(g.count(), 16u);
  const Image back = g.reassemble(g.decompose(img));
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(PatchGrid(3, 10, 10, 4), DimensionError);
}

TEST(NormalizeScaling, Examples) {
  const auto u = normalize_scaling(std::vector<double>(5, 0.4));
  for (double x : u) EXPECT_NEAR(x, 0.2, 1e-15);
  const auto d = normalize_scaling(std::vector<double>{0.2, 0.9});
  EXPECT_NEAR(d[0], 0.33181, 1e-5);
  EXPECT_NEAR(d[1], 0.66819, 1e-5);
  EXPECT_THROW(normalize_scaling(std::vector<double>{}), DimensionError);
}

TEST(NormalizeScaling, PermutationEquivariantAndNormalized) {
  Rng rng(32);
  for (int t = 0; t < 50; ++t) {
    auto k = random_kappa(rng, 9);
    const auto d = normalize_scaling(k);
    EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 9; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    std::vector<double> kp(9);
    for (std::size_t i = 0; i < 9; ++i) kp[i] = k[perm[i]];
    const auto dp = normalize_scaling(kp);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(dp[i], d[perm[i]], 1e-15);
  }
}

TEST(SelectDominant, Examples) {
  EXPECT_EQ(select_dominant(std::vector<double>{0.1, 0.4, 0.2, 0.3}, 2),
            (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(select_dominant(std::vector<double>(6, 1.0 / 6.0), 3),
            (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_dominant(std::vector<double>{0.5, 0.5}, 3), ContractError);
  EXPECT_THROW(select_dominant(std::vector<double>{0.5, 0.5}, 0), ContractError);
}

TEST(SelectDominant, MatchesSortOracle) {
  Rng rng(33);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(40);
    const std::size_t k = 1 + rng.index(n);
    std::vector<double> d(n);
    // Coarse values force plenty of ties.
    for (auto& x : d) x = static_cast<double>(rng.index(6)) / 6.0;
    EXPECT_EQ(select_dominant(d, k), sort_oracle(d, k));
  }
}

TEST(SelectDominant, ShiftInvariantInKappa) {
  Rng rng(34);
  for (int t = 0; t < 100; ++t) {
    auto k = random_kappa(rng, 16);
    auto shifted = k;
    for (auto& x : shifted) x += 0.37;
    EXPECT_EQ(select_dominant(normalize_scaling(k), 3), select_dominant(normalize_scaling(shifted), 3));
  }
}

TEST(MixAmplitude, Examples) {
  const std::vector<double> a{4.0, 1.0}, b{2.0, 3.0};
  EXPECT_EQ(mix_amplitude(a, b, 1.0), a);
  EXPECT_EQ(mix_amplitude(a, b, 0.0), b);
  EXPECT_DOUBLE_EQ(mix_amplitude(a, b, 0.5)[0], 3.0);
  EXPECT_THROW(mix_amplitude(a, std::vector<double>{1.0}, 0.5), DimensionError);
  EXPECT_THROW(mix_amplitude(a, b, 1.5), ContractError);
}

TEST(AugmentationConfig, Validation) {
  AugmentationConfig cfg;
  cfg.top_k = 0;
  EXPECT_THROW(cfg.validate(16), ContractError);
  cfg.top_k = 17;
  EXPECT_THROW(cfg.validate(16), ContractError);
  cfg.top_k = 16;
  cfg.alpha = 0.0;
  EXPECT_THROW(cfg.validate(16), ContractError);
  cfg.alpha = 1.0;
  EXPECT_NO_THROW(cfg.validate(16));
}

TEST(Augment, ForcedLambdaOneIsIdentity) {
  Rng rng(35);
  for (std::size_t k : {1u, 4u, 16u}) {
    const Image img = random_image(rng, 3, 32, 0.0, 1.0);
    const Image donor = random_image(rng, 3, 32, 0.0, 1.0);
    const PatchGrid g = PatchGrid::for_image(img, 8);
    AugmentationConfig cfg;
    cfg.top_k = k;
    cfg.forced_lambda = 1.0;
    cfg.seed = rng.bits();
    const Image out = augment(img, g, random_kappa(rng, 16), cfg, donor);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], img.pixels[i], 1e-5);
  }
}

TEST(Augment, LocalityAndPhasePreservation) {
  Rng rng(36);
  for (int t = 0; t < 50; ++t) {
    const Image img = random_image(rng, 3, 32);
    const Image donor = random_image(rng, 3, 32);
    const PatchGrid g = PatchGrid::for_image(img, 8);
    AugmentationConfig cfg;
    cfg.top_k = 1 + rng.index(4);
    cfg.seed = rng.bits();
    cfg.clamp = false;
    AugmentTrace trace;
    const Image out = augment(img, g, random_kappa(rng, 16), cfg, donor, &trace);
    ASSERT_EQ(trace.dominant.size(), cfg.top_k);

    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const bool dominant = std::any_of(trace.dominant.begin(), trace.dominant.end(),
                                            [&](std::size_t i) { return in_patch(g, i, y, x); });
          if (!dominant) {
            EXPECT_EQ(out.at(c, y, x), img.at(c, y, x));
          }
        }

    for (std::size_t i : trace.dominant)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto before = fourier::amplitude_phase(fourier::dft2(g.channel_patch(img, i, c)));
        const auto after = fourier::amplitude_phase(fourier::dft2(g.channel_patch(out, i, c)));
        for (std::size_t b = 0; b < before.phase.size(); ++b) {
          if (after.amplitude[b] > 1e-8) {
            EXPECT_LT(std::abs(wrap(after.phase[b] - before.phase[b])), 1e-6);
          }
        }
      }
  }
}

TEST(Augment, AmplitudeIsConvexCombination) {
  Rng rng(37);
  for (int t = 0; t < 20; ++t) {
    const Image img = random_image(rng, 3, 16);
    const Image donor = random_image(rng, 3, 16);
    const PatchGrid g = PatchGrid::for_image(img, 8);
    AugmentationConfig cfg;
    cfg.top_k = 2;
    cfg.seed = rng.bits();
    cfg.clamp = false;
    AugmentTrace trace;
    const Image out = augment(img, g, random_kappa(rng, 4), cfg, donor, &trace);
    for (std::size_t k = 0; k < trace.dominant.size(); ++k)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto own = fourier::amplitude_phase(fourier::dft2(g.channel_patch(img, trace.dominant[k], c)));
        const auto other =
            fourier::amplitude_phase(fourier::dft2(g.channel_patch(donor, trace.donor_patches[k], c)));
        const auto mixed = fourier::amplitude_phase(fourier::dft2(g.channel_patch(out, trace.dominant[k], c)));
        for (std::size_t b = 0; b < own.amplitude.size(); ++b) {
          const double lo = std::min(own.amplitude[b], other.amplitude[b]);
          const double hi = std::max(own.amplitude[b], other.amplitude[b]);
          EXPECT_GE(mixed.amplitude[b], lo - 1e-9);
          EXPECT_LE(mixed.amplitude[b], hi + 1e-9);
        }
      }
  }
}

TEST(Augment, LambdaWithinAlphaAndDeterministic) {
  Rng rng(38);
  const Image img = random_image(rng, 3, 32);
  const Image donor = random_image(rng, 3, 32);
  const PatchGrid g = PatchGrid::for_image(img, 8);
  const auto kappa = random_kappa(rng, 16);
  AugmentationConfig cfg;
  cfg.top_k = 5;
  cfg.alpha = 0.3;
  cfg.seed = 99;
  AugmentTrace t1, t2;
  const Image a = augment(img, g, kappa, cfg, donor, &t1);
  const Image b = augment(img, g, kappa, cfg, donor, &t2);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(t1.lambdas, t2.lambdas);
  for (double l : t1.lambdas) {
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 0.3);
  }
  for (double p : a.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Augment, DimensionErrors) {
  Rng rng(39);
  const Image img = random_image(rng, 3, 16);
  const PatchGrid g = PatchGrid::for_image(img, 8);
  AugmentationConfig cfg;
  EXPECT_THROW(augment(img, g, random_kappa(rng, 4), cfg, random_image(rng, 3, 24)), DimensionError);
  EXPECT_THROW(augment(img, g, random_kappa(rng, 3), cfg, img), DimensionError);
  cfg.top_k = 5;
  EXPECT_THROW(augment(img, g, random_kappa(rng, 4), cfg, img), ContractError);
}

TEST(Augment, CountsInvocations) {
  Rng rng(40);
  const Image img = random_image(rng, 1, 8);
  const PatchGrid g = PatchGrid::for_image(img, 4);
  const auto before = invocation_count();
  augment(img, g, random_kappa(rng, 4), AugmentationConfig{}, img);
  EXPECT_EQ(invocation_count(), before + 1);
}
