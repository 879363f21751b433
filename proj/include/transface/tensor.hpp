#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "transface/errors.hpp"

namespace transface {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Vector-Jacobian product callback. `grad_in[i]` is empty when input i does
/// not take gradients; otherwise contributions must be added, never assigned.
using VjpFn = std::function<void(std::span<const double> grad_out,
                                 std::span<const std::span<double>> grad_in)>;

namespace detail {
struct Node;
}

/// Gradient recording is on by default; a live NoGradGuard turns it off for
/// the current thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major float64 tensor with reverse-mode differentiation.
///
/// Copies are shallow handles onto the same storage and graph node, the same
/// way parameters are shared between a model and its optimizer.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// Direct write access. Only legal on leaves; used by optimizers and tests.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  /// Gradient buffer; empty span before any backward pass touched this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  bool is_leaf() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Records an operation output. `inputs` become graph parents when
  /// recording is enabled and any of them requires gradients.
  static Tensor record(Shape shape, std::vector<double> values,
                       std::vector<Tensor> inputs, VjpFn vjp);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  friend void backward(const Tensor& loss);

  std::shared_ptr<detail::Node> node_;
};

/// Populates `grad` on every tensor reachable from `loss` that requires it.
/// Gradients accumulate; call zero_grad on parameters between steps.
void backward(const Tensor& loss);

// Elementwise arithmetic. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);

/// a[m×n] + b[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);
/// a[m×n] scaled row-wise by k[m].
Tensor scale_rows(const Tensor& a, const Tensor& k);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Half-open range [begin, end) along `axis` of a rank-1 or rank-2 tensor.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);

/// Max-subtracted softmax of a rank-1 tensor.
Tensor softmax(const Tensor& v);
/// Softmax applied independently to each row of a rank-2 tensor.
Tensor softmax_rows(const Tensor& a);

inline constexpr double kLayerNormEps = 1e-6;

/// Row-wise layer normalization of t[n×D] with affine gain/bias [D].
Tensor layernorm(const Tensor& t, const Tensor& gain, const Tensor& bias);

/// Mean over the last axis.
Tensor mean_last(const Tensor& t);

/// Mean and population variance over the last axis; a rank-1 input yields
/// scalars, a rank-2 input yields one value per row.
std::pair<Tensor, Tensor> reduce_mean_var(const Tensor& t);

/// softmax(q kᵀ / sqrt(d)) for q[n×d], k[n×d].
Tensor attention_weights(const Tensor& q, const Tensor& k);
/// attention_weights(q, k) · v
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Cosine of the angle between e[E] and every column of w[E×c]; returns [c].
Tensor cosine_to_columns(const Tensor& e, const Tensor& w);

}  // namespace transface
