#include "transface/optimizer.hpp"

#include <cmath>

namespace transface {

namespace {
std::vector<bool> default_decay(const std::vector<Tensor>& params) {
  std::vector<bool> d;
  d.reserve(params.size());
  for (const auto& p : params) d.push_back(p.rank() >= 2);
  return d;
}
}  // namespace

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions opts)
    : AdamW(params, opts, default_decay(params)) {}

AdamW::AdamW(std::vector<Tensor> params, AdamWOptions opts, std::vector<bool> decay)
    : params_(std::move(params)), opts_(opts), decay_(std::move(decay)) {
  if (decay_.size() != params_.size()) throw DimensionError("AdamW: decay mask size mismatch");
  for (const auto& p : params_) {
    if (!p.is_leaf()) throw ContractError("AdamW: parameters must be leaves");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(opts_.beta1, t);
  const double c2 = 1.0 - std::pow(opts_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const double shrink = decay_[i] ? 1.0 - opts_.lr * opts_.weight_decay : 1.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * g[j];
      v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = w[j] * shrink - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace transface
