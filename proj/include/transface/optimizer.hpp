#pragma once

#include <cstddef>
#include <vector>

#include "transface/tensor.hpp"

namespace transface {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Decay applies only to tensors flagged in
/// `decay` (by default every parameter of rank 2 or more).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWOptions opts);
  AdamW(std::vector<Tensor> params, AdamWOptions opts, std::vector<bool> decay);

  /// One update from the accumulated gradients. Parameters without a gradient
  /// are skipped.
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const AdamWOptions& options() const { return opts_; }

 private:
  std::vector<Tensor> params_;
  AdamWOptions opts_;
  std::vector<bool> decay_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace transface
