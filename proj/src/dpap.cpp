#include "transface/dpap.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <string>

#include "transface/fourier.hpp"
#include "transface/rng.hpp"
#include "transface/tensor.hpp"

namespace transface::dpap {

namespace {
std::atomic<std::uint64_t> g_invocations{0};
}

void AugmentationConfig::validate(std::size_t patch_count) const {
  if (top_k < 1 || top_k > patch_count) {
    throw ContractError("top-k " + std::to_string(top_k) + " outside [1, " +
                        std::to_string(patch_count) + "]");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
  if (forced_lambda && !(*forced_lambda >= 0.0 && *forced_lambda <= 1.0)) {
    throw ContractError("forced lambda must lie in [0, 1]");
  }
}

std::vector<double> normalize_scaling(std::span<const double> kappa) {
  if (kappa.empty()) throw DimensionError("normalize_scaling of an empty vector");
  NoGradGuard no_grad;
  const Tensor d = softmax(Tensor::vector({kappa.begin(), kappa.end()}));
  return {d.data().begin(), d.data().end()};
}

std::vector<std::size_t> select_dominant(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw ContractError("select_dominant: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<double> mix_amplitude(std::span<const double> a_dom, std::span<const double> a_rand,
                                  double lambda) {
  if (a_dom.size() != a_rand.size()) {
    throw DimensionError("mix_amplitude: grids of " + std::to_string(a_dom.size()) + " and " +
                         std::to_string(a_rand.size()) + " bins");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("mix_amplitude: lambda outside [0, 1]");
  std::vector<double> out(a_dom.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lambda * a_dom[i] + (1.0 - lambda) * a_rand[i];
  }
  return out;
}

Image augment(const Image& img, const PatchGrid& grid, std::span<const double> kappa,
              const AugmentationConfig& cfg, const Image& donor, AugmentTrace* trace) {
  g_invocations.fetch_add(1, std::memory_order_relaxed);
  grid.check(img);
  if (!img.same_dims(donor)) throw DimensionError("augment: donor image dimensions differ");
  grid.check(donor);
  const std::size_t n = grid.count();
  if (kappa.size() != n) {
    throw DimensionError("augment: " + std::to_string(kappa.size()) + " scaling factors for " +
                         std::to_string(n) + " patches");
  }
  cfg.validate(n);

  const auto dominant = select_dominant(normalize_scaling(kappa), cfg.top_k);
  Rng rng(cfg.seed);
  Image out = img;
  if (trace) *trace = AugmentTrace{dominant, {}, {}, 0};

  for (const std::size_t i : dominant) {
    double lambda = rng.uniform(0.0, cfg.alpha);
    if (cfg.forced_lambda) lambda = *cfg.forced_lambda;
    const std::size_t j = rng.index(n);
    if (trace) {
      trace->lambdas.push_back(lambda);
      trace->donor_patches.push_back(j);
    }
    for (std::size_t c = 0; c < img.channels; ++c) {
      const auto own = fourier::amplitude_phase(
          fourier::hermitian_part(fourier::dft2(grid.channel_patch(img, i, c))));
      const auto other = fourier::amplitude_phase(
          fourier::hermitian_part(fourier::dft2(grid.channel_patch(donor, j, c))));
      fourier::AmplitudePhase mixed = own;
      mixed.amplitude = mix_amplitude(own.amplitude, other.amplitude, lambda);
      auto patch = fourier::idft2(fourier::reconstruct(mixed));
      if (cfg.clamp) {
        for (auto& v : patch.values) {
          const double c01 = std::clamp(v, 0.0, 1.0);
          if (c01 != v && trace) ++trace->clamped_pixels;
          v = c01;
        }
      }
      grid.put_channel_patch(out, i, c, patch);
    }
  }
  return out;
}

std::uint64_t invocation_count() { return g_invocations.load(std::memory_order_relaxed); }

}  // namespace transface::dpap
