#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "transface/tensor.hpp"

namespace transface::ehsm {

/// How a token's information content is measured.
enum class InfoMode {
  variance,          // σ² of the token entries
  gaussian_entropy,  // ½(1 + log 2π + log(σ² + ε))
};

std::string to_string(InfoMode mode);
InfoMode info_mode_from_string(const std::string& name);

/// ε guarding log(0) for constant tokens in gaussian mode.
inline constexpr double kEntropyEps = 1e-8;

/// Differential entropy of a Gaussian with the given variance (no ε).
double gaussian_entropy(double variance);

/// Information of a token [D] (scalar result) or of every row of a token
/// matrix [n×D] (one value per row). Differentiable.
Tensor token_information(const Tensor& tokens, InfoMode mode);

/// η = 1 + exp(-γ Σ_i E_i) over the entries of `info`.
Tensor sample_weight(const Tensor& info, double gamma);

/// η × L_arc, with gradient through both factors.
Tensor reweighted_loss(const Tensor& eta, const Tensor& arc);

/// Mean per-token information over every row of every gated token matrix.
double mean_token_information(std::span<const Tensor> gated_sets, InfoMode mode);

struct EntropyReport {
  std::vector<double> per_token;
  double total = 0.0;
  double eta = 0.0;
  InfoMode mode = InfoMode::variance;
};

EntropyReport report(const Tensor& gated, double gamma, InfoMode mode);

/// Number of sample_weight calls in this process.
std::uint64_t invocation_count();

}  // namespace transface::ehsm
