#include "transface/ehsm.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

namespace transface::ehsm {

namespace {
std::atomic<std::uint64_t> g_invocations{0};
const double kHalfOnePlusLog2Pi = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
}  // namespace

std::string to_string(InfoMode mode) {
  return mode == InfoMode::variance ? "variance" : "entropy";
}

InfoMode info_mode_from_string(const std::string& name) {
  if (name == "variance") return InfoMode::variance;
  if (name == "entropy" || name == "gaussian-entropy") return InfoMode::gaussian_entropy;
  throw ContractError("unknown information mode '" + name + "'");
}

double gaussian_entropy(double variance) {
  return 0.5 * (1.0 + std::log(2.0 * std::numbers::pi) + std::log(variance));
}

Tensor token_information(const Tensor& tokens, InfoMode mode) {
  auto [mu, var] = reduce_mean_var(tokens);
  if (mode == InfoMode::variance) return var;
  return add_scalar(scale(log(add_scalar(var, kEntropyEps)), 0.5), kHalfOnePlusLog2Pi);
}

Tensor sample_weight(const Tensor& info, double gamma) {
  if (!(gamma > 0.0)) throw ContractError("sample_weight: gamma must be positive");
  g_invocations.fetch_add(1, std::memory_order_relaxed);
  return add_scalar(exp(scale(sum(info), -gamma)), 1.0);
}

Tensor reweighted_loss(const Tensor& eta, const Tensor& arc) {
  if (eta.numel() != 1 || arc.numel() != 1) {
    throw DimensionError("reweighted_loss expects scalars, got " + shape_string(eta.shape()) +
                         " and " + shape_string(arc.shape()));
  }
  return mul(reshape(eta, {}), reshape(arc, {}));
}

double mean_token_information(std::span<const Tensor> gated_sets, InfoMode mode) {
  if (gated_sets.empty()) throw ContractError("mean_token_information of an empty batch");
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : gated_sets) {
    const Tensor info = token_information(g, mode);
    for (double v : info.data()) total += v;
    count += info.numel();
  }
  return total / static_cast<double>(count);
}

EntropyReport report(const Tensor& gated, double gamma, InfoMode mode) {
  NoGradGuard no_grad;
  const Tensor info = token_information(gated, mode);
  EntropyReport r;
  r.mode = mode;
  r.per_token.assign(info.data().begin(), info.data().end());
  for (double v : r.per_token) r.total += v;
  r.eta = 1.0 + std::exp(-gamma * r.total);
  return r;
}

std::uint64_t invocation_count() { return g_invocations.load(std::memory_order_relaxed); }

}  // namespace transface::ehsm
