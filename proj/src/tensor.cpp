#include "transface/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace transface {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  VjpFn vjp;
};
}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  std::vector<double> yy = y;
  return Tensor::record(a.shape(), std::move(y), {a},
                        [a, yy = std::move(yy), df](std::span<const double> go,
                                                    std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          const auto x = a.data();
                          for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i] * df(x[i], yy[i]);
                        });
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis out of range for " + shape_string(shape()));
  return node_->shape[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("mutable_data on a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_rank(*this, 2, "at");
  return node_->data[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw ContractError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = value;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(numel(), 0.0); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

bool Tensor::is_leaf() const { return node_->parents.empty(); }

Tensor Tensor::record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                      VjpFn vjp) {
  Tensor out(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& t : inputs) out.node_->parents.push_back(t.node_);
  out.node_->vjp = std::move(vjp);
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto* root = loss.node_.get();
  if (root->grad.empty()) root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;

  std::vector<std::span<double>> spans;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->vjp) continue;
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
    spans.clear();
    for (auto& p : node->parents) {
      if (p->requires_grad) {
        if (p->grad.empty()) p->grad.assign(p->data.size(), 0.0);
        spans.emplace_back(p->grad);
      } else {
        spans.emplace_back();
      }
    }
    node->vjp(node->grad, spans);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return Tensor::record(a.shape(), std::move(out), {a, b},
                        [](std::span<const double> go, std::span<const std::span<double>> gi) {
                          for (auto g : gi)
                            if (!g.empty())
                              for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
                        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return Tensor::record(a.shape(), std::move(out), {a, b},
                        [](std::span<const double> go, std::span<const std::span<double>> gi) {
                          if (!gi[0].empty())
                            for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i];
                          if (!gi[1].empty())
                            for (std::size_t i = 0; i < go.size(); ++i) gi[1][i] -= go[i];
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return Tensor::record(a.shape(), std::move(out), {a, b},
                        [a, b](std::span<const double> go, std::span<const std::span<double>> gi) {
                          const auto x = a.data(), y = b.data();
                          if (!gi[0].empty())
                            for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i] * y[i];
                          if (!gi[1].empty())
                            for (std::size_t i = 0; i < go.size(); ++i) gi[1][i] += go[i] * x[i];
                        });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data())
    if (!(x > 0.0)) throw ContractError("log of non-positive value");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.data())
    if (x < 0.0) throw ContractError("sqrt of negative value");
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "add_row");
  require_rank(b, 1, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("add_row: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + y[j];
  return Tensor::record(a.shape(), std::move(out), {a, b},
                        [m, n](std::span<const double> go, std::span<const std::span<double>> gi) {
                          if (!gi[0].empty())
                            for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i];
                          if (!gi[1].empty())
                            for (std::size_t i = 0; i < m; ++i)
                              for (std::size_t j = 0; j < n; ++j) gi[1][j] += go[i * n + j];
                        });
}

Tensor scale_rows(const Tensor& a, const Tensor& k) {
  require_rank(a, 2, "scale_rows");
  require_rank(k, 1, "scale_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (k.dim(0) != m) {
    throw DimensionError("scale_rows: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(k.shape()));
  }
  const auto x = a.data(), s = k.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * s[i];
  return Tensor::record(
      a.shape(), std::move(out), {a, k},
      [a, k, m, n](std::span<const double> go, std::span<const std::span<double>> gi) {
        const auto x = a.data(), s = k.data();
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (!gi[0].empty()) gi[0][i * n + j] += go[i * n + j] * s[i];
            acc += go[i * n + j] * x[i * n + j];
          }
          if (!gi[1].empty()) gi[1][i] += acc;
        }
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.data()) total += x;
  return Tensor::record(Shape{}, {total}, {a},
                        [](std::span<const double> go, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (auto& g : gi[0]) g += go[0];
                        });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  const auto x = a.data(), y = b.data();
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * p;
    for (std::size_t t = 0; t < k; ++t) {
      const double xv = x[i * k + t];
      const double* yrow = y.data() + t * p;
      for (std::size_t j = 0; j < p; ++j) row[j] += xv * yrow[j];
    }
  }
  return Tensor::record(
      Shape{m, p}, std::move(out), {a, b},
      [a, b, m, k, p](std::span<const double> go, std::span<const std::span<double>> gi) {
        const auto x = a.data(), y = b.data();
        if (!gi[0].empty()) {
          // ga = go · bᵀ
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              double acc = 0.0;
              const double* yrow = y.data() + t * p;
              const double* grow = go.data() + i * p;
              for (std::size_t j = 0; j < p; ++j) acc += grow[j] * yrow[j];
              gi[0][i * k + t] += acc;
            }
        }
        if (!gi[1].empty()) {
          // gb = aᵀ · go
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t t = 0; t < k; ++t) {
              const double xv = x[i * k + t];
              double* brow = gi[1].data() + t * p;
              const double* grow = go.data() + i * p;
              for (std::size_t j = 0; j < p; ++j) brow[j] += xv * grow[j];
            }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return Tensor::record(Shape{n, m}, std::move(out), {a},
                        [m, n](std::span<const double> go, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) gi[0][i * n + j] += go[j * m + i];
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::record(std::move(shape), std::move(out), {a},
                        [](std::span<const double> go, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t i = 0; i < go.size(); ++i) gi[0][i] += go[i];
                        });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require(a.rank() == 1 || a.rank() == 2, "slice: rank-1 or rank-2 input required, got " +
                                              shape_string(a.shape()));
  require(axis < a.rank(), "slice: axis out of range for " + shape_string(a.shape()));
  require(begin < end && end <= a.dim(axis),
          "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for " + shape_string(a.shape()));
  const std::size_t rows = a.rank() == 1 ? 1 : a.dim(0);
  const std::size_t cols = a.rank() == 1 ? a.dim(0) : a.dim(1);
  const bool by_row = a.rank() == 2 && axis == 0;
  const std::size_t r0 = by_row ? begin : 0, r1 = by_row ? end : rows;
  const std::size_t c0 = by_row ? 0 : begin, c1 = by_row ? cols : end;
  const auto x = a.data();
  std::vector<double> out;
  out.reserve((r1 - r0) * (c1 - c0));
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) out.push_back(x[i * cols + j]);
  Shape shape = a.rank() == 1 ? Shape{end - begin} : Shape{r1 - r0, c1 - c0};
  return Tensor::record(
      std::move(shape), std::move(out), {a},
      [=](std::span<const double> go, std::span<const std::span<double>> gi) {
        if (gi[0].empty()) return;
        std::size_t idx = 0;
        for (std::size_t i = r0; i < r1; ++i)
          for (std::size_t j = c0; j < c1; ++j) gi[0][i * cols + j] += go[idx++];
      });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const std::size_t rank = parts[0].rank();
  require(rank == 1 || rank == 2, "concat: rank-1 or rank-2 inputs required");
  require(axis < rank, "concat: axis out of range");
  for (const auto& p : parts) {
    require(p.rank() == rank, "concat: rank mismatch");
    if (rank == 2) {
      const std::size_t other = 1 - axis;
      if (p.dim(other) != parts[0].dim(other)) {
        throw DimensionError("concat: shape mismatch " + shape_string(parts[0].shape()) + " vs " +
                             shape_string(p.shape()));
      }
    }
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    widths.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const std::size_t rows = rank == 1 ? 1 : (axis == 0 ? total : parts[0].dim(0));
  const std::size_t cols = rank == 1 ? total : (axis == 0 ? parts[0].dim(1) : total);
  std::vector<double> out(rows * cols);
  // Row concatenation and rank-1 concatenation are plain appends.
  const bool append = rank == 1 || axis == 0;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    offsets.push_back(off);
    const auto x = parts[q].data();
    if (append) {
      std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
      off += x.size();
    } else {
      const std::size_t w = widths[q];
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * cols + off + j] = x[i * w + j];
      off += w;
    }
  }
  Shape shape = rank == 1 ? Shape{total} : Shape{rows, cols};
  return Tensor::record(
      std::move(shape), std::move(out), std::move(inputs),
      [=](std::span<const double> go, std::span<const std::span<double>> gi) {
        for (std::size_t q = 0; q < gi.size(); ++q) {
          if (gi[q].empty()) continue;
          if (append) {
            for (std::size_t i = 0; i < gi[q].size(); ++i) gi[q][i] += go[offsets[q] + i];
          } else {
            const std::size_t w = widths[q];
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < w; ++j) gi[q][i * w + j] += go[i * cols + offsets[q] + j];
          }
        }
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

namespace {

void softmax_inplace(std::span<const double> x, std::span<double> y) {
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (auto& v : y) v /= total;
}

Tensor softmax_impl(const Tensor& a, std::size_t rows, std::size_t cols) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    softmax_inplace(x.subspan(r * cols, cols), std::span<double>(out).subspan(r * cols, cols));
  std::vector<double> saved = out;
  return Tensor::record(
      a.shape(), std::move(out), {a},
      [rows, cols, y = std::move(saved)](std::span<const double> go,
                                         std::span<const std::span<double>> gi) {
        if (gi[0].empty()) return;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < cols; ++j) dot += go[o + j] * y[o + j];
          for (std::size_t j = 0; j < cols; ++j) gi[0][o + j] += y[o + j] * (go[o + j] - dot);
        }
      });
}

}  // namespace

Tensor softmax(const Tensor& v) {
  require_rank(v, 1, "softmax");
  if (v.numel() == 0) throw DimensionError("softmax of empty vector");
  return softmax_impl(v, 1, v.numel());
}

Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  if (a.dim(1) == 0) throw DimensionError("softmax_rows with zero columns");
  return softmax_impl(a, a.dim(0), a.dim(1));
}

Tensor layernorm(const Tensor& t, const Tensor& gain, const Tensor& bias) {
  require_rank(t, 2, "layernorm");
  const std::size_t n = t.dim(0), d = t.dim(1);
  if (d < 2) throw DimensionError("layernorm: row width must be >= 2, got " + shape_string(t.shape()));
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw DimensionError("layernorm: affine shapes " + shape_string(gain.shape()) + ", " +
                         shape_string(bias.shape()) + " do not match " + shape_string(t.shape()));
  }
  const auto x = t.data(), g = gain.data(), b = bias.data();
  std::vector<double> xhat(x.size()), inv(n), out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv[i] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x[i * d + j] - mu) * inv[i];
      out[i * d + j] = xhat[i * d + j] * g[j] + b[j];
    }
  }
  return Tensor::record(
      t.shape(), std::move(out), {t, gain, bias},
      [gain, n, d, xhat = std::move(xhat), inv = std::move(inv)](
          std::span<const double> go, std::span<const std::span<double>> gi) {
        const auto g = gain.data();
        const double dd = static_cast<double>(d);
        std::vector<double> dxhat(d);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t o = i * d;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            if (!gi[1].empty()) gi[1][j] += go[o + j] * xhat[o + j];
            if (!gi[2].empty()) gi[2][j] += go[o + j];
            dxhat[j] = go[o + j] * g[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[o + j];
          }
          if (gi[0].empty()) continue;
          m1 /= dd;
          m2 /= dd;
          for (std::size_t j = 0; j < d; ++j)
            gi[0][o + j] += inv[i] * (dxhat[j] - m1 - xhat[o + j] * m2);
        }
      });
}

namespace {

std::pair<std::size_t, std::size_t> rows_cols_last(const Tensor& t, const char* op,
                                                   std::size_t min_width) {
  require(t.rank() == 1 || t.rank() == 2,
          std::string(op) + ": rank-1 or rank-2 input required, got " + shape_string(t.shape()));
  const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0);
  const std::size_t cols = t.rank() == 1 ? t.dim(0) : t.dim(1);
  if (cols < min_width) {
    throw DimensionError(std::string(op) + ": last axis must be >= " + std::to_string(min_width) +
                         ", got " + shape_string(t.shape()));
  }
  return {rows, cols};
}

Shape reduced_shape(const Tensor& t) { return t.rank() == 1 ? Shape{} : Shape{t.dim(0)}; }

}  // namespace

Tensor mean_last(const Tensor& t) {
  const auto [rows, cols] = rows_cols_last(t, "mean_last", 1);
  const auto x = t.data();
  std::vector<double> out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i] += x[i * cols + j];
    out[i] /= static_cast<double>(cols);
  }
  return Tensor::record(reduced_shape(t), std::move(out), {t},
                        [rows, cols](std::span<const double> go,
                                     std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          const double w = 1.0 / static_cast<double>(cols);
                          for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t j = 0; j < cols; ++j) gi[0][i * cols + j] += go[i] * w;
                        });
}

std::pair<Tensor, Tensor> reduce_mean_var(const Tensor& t) {
  const auto [rows, cols] = rows_cols_last(t, "reduce_mean_var", 2);
  const auto x = t.data();
  const double dd = static_cast<double>(cols);
  std::vector<double> mu(rows, 0.0), var(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) mu[i] += x[i * cols + j];
    mu[i] /= dd;
    for (std::size_t j = 0; j < cols; ++j) {
      const double c = x[i * cols + j] - mu[i];
      var[i] += c * c;
    }
    var[i] /= dd;
  }
  Tensor mean_t = mean_last(t);
  std::vector<double> saved_mu = mu;
  Tensor var_t = Tensor::record(
      reduced_shape(t), std::move(var), {t},
      [t, rows, cols, dd, mu = std::move(saved_mu)](std::span<const double> go,
                                                    std::span<const std::span<double>> gi) {
        if (gi[0].empty()) return;
        const auto x = t.data();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            gi[0][i * cols + j] += go[i] * 2.0 * (x[i * cols + j] - mu[i]) / dd;
      });
  return {mean_t, var_t};
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: query/key widths differ " + shape_string(q.shape()) + " vs " +
                         shape_string(k.shape()));
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return softmax_rows(scale(matmul(q, transpose(k)), inv));
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  return matmul(attention_weights(q, k), v);
}

Tensor cosine_to_columns(const Tensor& e, const Tensor& w) {
  require_rank(e, 1, "cosine_to_columns");
  require_rank(w, 2, "cosine_to_columns");
  const std::size_t dim = e.dim(0), c = w.dim(1);
  if (w.dim(0) != dim) {
    throw DimensionError("cosine_to_columns: shape mismatch " + shape_string(e.shape()) + " vs " +
                         shape_string(w.shape()));
  }
  const auto x = e.data(), y = w.data();
  double en2 = 0.0;
  for (double v : x) en2 += v * v;
  if (!std::isfinite(en2)) throw NumericalError("cosine_to_columns: non-finite embedding");
  if (!(en2 > 0.0)) throw ContractError("cosine_to_columns: zero-norm embedding");
  const double en = std::sqrt(en2);
  std::vector<double> wn(c, 0.0), dots(c, 0.0), out(c);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t l = 0; l < c; ++l) {
      wn[l] += y[i * c + l] * y[i * c + l];
      dots[l] += x[i] * y[i * c + l];
    }
  for (std::size_t l = 0; l < c; ++l) {
    if (!std::isfinite(wn[l])) {
      throw NumericalError("cosine_to_columns: non-finite weight column " + std::to_string(l));
    }
    if (!(wn[l] > 0.0)) {
      throw ContractError("cosine_to_columns: zero-norm weight column " + std::to_string(l));
    }
    wn[l] = std::sqrt(wn[l]);
    out[l] = dots[l] / (en * wn[l]);
  }
  std::vector<double> cosv = out;
  return Tensor::record(
      Shape{c}, std::move(out), {e, w},
      [e, w, dim, c, en, wn = std::move(wn), cosv = std::move(cosv)](
          std::span<const double> go, std::span<const std::span<double>> gi) {
        const auto x = e.data(), y = w.data();
        for (std::size_t l = 0; l < c; ++l) {
          if (go[l] == 0.0) continue;
          const double a = go[l] / (en * wn[l]);
          if (!gi[0].empty()) {
            const double b = go[l] * cosv[l] / (en * en);
            for (std::size_t i = 0; i < dim; ++i) gi[0][i] += a * y[i * c + l] - b * x[i];
          }
          if (!gi[1].empty()) {
            const double b = go[l] * cosv[l] / (wn[l] * wn[l]);
            for (std::size_t i = 0; i < dim; ++i) gi[1][i * c + l] += a * x[i] - b * y[i * c + l];
          }
        }
      });
}

}  // namespace transface
