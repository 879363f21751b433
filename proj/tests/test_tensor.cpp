#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "transface/tensor.hpp"

using namespace transface;
using transface::testing::grad_check;
using transface::testing::random_tensor;

namespace {

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * p + j] += a.at(i, t) * b.at(t, j);
  return out;
}

std::pair<double, double> two_pass(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, var / static_cast<double>(xs.size())};
}

constexpr double kGradTol = 1e-4;

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5, 0.0)), DimensionError);
  const Tensor t = Tensor::zeros({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(1);
  const Tensor b = random_tensor(rng, {3, 4});
  const Tensor c = matmul(eye, b);
  ASSERT_EQ(c.shape(), b.shape());
  for (std::size_t i = 0; i < b.numel(); ++i) EXPECT_EQ(c[i], b[i]);
}

TEST(Matmul, HandComputed) {
  const Tensor c = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c.item(), 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(2);
  const Tensor a = random_tensor(rng, {5, 7});
  const Tensor b = random_tensor(rng, {7, 3});
  const auto expect = naive_matmul(a, b);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(c[i], expect[i], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Softmax, Examples) {
  const Tensor u = softmax(Tensor::vector({0, 0, 0, 0}));
  for (double x : u.data()) EXPECT_DOUBLE_EQ(x, 0.25);
  const Tensor s = softmax(Tensor::vector({1, 2}));
  EXPECT_NEAR(s[0], 0.26894, 1e-5);
  EXPECT_NEAR(s[1], 0.73106, 1e-5);
  const Tensor big = softmax(Tensor::vector({1000, 1000}));
  EXPECT_DOUBLE_EQ(big[0], 0.5);
  EXPECT_DOUBLE_EQ(big[1], 0.5);
  EXPECT_THROW(softmax(Tensor::vector({})), DimensionError);
}

TEST(Softmax, IsProbabilityVector) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor v = random_tensor(rng, {1 + rng.index(20)}, -30.0, 30.0);
    const Tensor s = softmax(v);
    double total = 0.0;
    for (double x : s.data()) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(LayerNorm, Examples) {
  const Tensor ones = Tensor::full({2}, 1.0);
  const Tensor zeros = Tensor::zeros({2});
  const Tensor flat = layernorm(Tensor::matrix(1, 2, {5, 5}), ones, zeros);
  EXPECT_EQ(flat[0], 0.0);
  EXPECT_EQ(flat[1], 0.0);
  const Tensor r = layernorm(Tensor::matrix(1, 2, {1, 3}), ones, zeros);
  // Population std is 1, so only ε perturbs the result.
  EXPECT_NEAR(r[0], -1.0, 1e-6);
  EXPECT_NEAR(r[1], 1.0, 1e-6);
  EXPECT_THROW(layernorm(Tensor::matrix(2, 1, {1, 2}), Tensor::full({1}, 1.0), Tensor::zeros({1})),
               DimensionError);
}

TEST(LayerNorm, RowsHaveZeroMean) {
  Rng rng(4);
  const Tensor t = random_tensor(rng, {6, 9}, -5.0, 5.0);
  const Tensor out = layernorm(t, Tensor::full({9}, 1.0), Tensor::zeros({9}));
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0.0;
    for (std::size_t c = 0; c < 9; ++c) m += out.at(r, c);
    EXPECT_LT(std::abs(m / 9.0), 1e-10);
  }
}

TEST(ReduceMeanVar, Examples) {
  auto [m1, v1] = reduce_mean_var(Tensor::vector({1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(m1.item(), 1.0);
  EXPECT_DOUBLE_EQ(v1.item(), 0.0);
  auto [m2, v2] = reduce_mean_var(Tensor::vector({0, 2}));
  EXPECT_DOUBLE_EQ(m2.item(), 1.0);
  EXPECT_DOUBLE_EQ(v2.item(), 1.0);
  EXPECT_THROW(reduce_mean_var(Tensor::vector({3})), DimensionError);
}

TEST(ReduceMeanVar, MatchesTwoPassOracle) {
  Rng rng(5);
  const Tensor t = random_tensor(rng, {7, 13}, -3.0, 3.0);
  auto [m, v] = reduce_mean_var(t);
  ASSERT_EQ(m.shape(), (Shape{7}));
  for (std::size_t r = 0; r < 7; ++r) {
    const auto [em, ev] = two_pass(t.data().subspan(r * 13, 13));
    EXPECT_NEAR(m[r], em, 1e-12);
    EXPECT_NEAR(v[r], ev, 1e-12);
  }
}

TEST(Backward, Examples) {
  Tensor w = Tensor::vector({0.3, -1.0, 2.0}, true);
  backward(sum(w));
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);

  Tensor u = Tensor::vector({1, 2}, true);
  backward(sum(mul(u, u)));
  EXPECT_DOUBLE_EQ(u.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(u.grad()[1], 4.0);
}

TEST(Backward, FanOutAccumulates) {
  Tensor w = Tensor::vector({1, 2, 3}, true);
  backward(add(sum(w), sum(w)));
  for (double g : w.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, UnreachableParameterKeepsZeroGrad) {
  Tensor used = Tensor::vector({1, 2}, true);
  Tensor unused = Tensor::vector({3, 4}, true);
  used.zero_grad();
  unused.zero_grad();
  backward(sum(used));
  for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(scale(w, 2.0)), ContractError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  Tensor w = Tensor::vector({1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    y = sum(mul(w, w));
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(grad_enabled());
}

TEST(Determinism, IdenticalInputsGiveIdenticalOutputs) {
  Rng rng(6);
  const Tensor a = random_tensor(rng, {4, 8});
  const Tensor b = random_tensor(rng, {8, 5});
  const Tensor x = softmax_rows(matmul(a, b));
  const Tensor y = softmax_rows(matmul(a, b));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x[i], y[i]);
}

TEST(Errors, DomainChecks) {
  EXPECT_THROW(log(Tensor::vector({1.0, 0.0})), ContractError);
  EXPECT_THROW(sqrt(Tensor::vector({-1.0})), ContractError);
  EXPECT_THROW(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(cosine_to_columns(Tensor::zeros({3}), Tensor::full({3, 2}, 1.0)), ContractError);
  EXPECT_THROW(cosine_to_columns(Tensor::full({3}, 1.0), Tensor::zeros({3, 2})), ContractError);
}

TEST(Ops, SliceConcatTransposeValues) {
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor t = transpose(m);
  EXPECT_EQ(t.shape(), (Shape{3, 2}));
  EXPECT_EQ(t.at(2, 1), 6.0);
  const Tensor s = slice(m, 1, 1, 3);
  EXPECT_EQ(s.shape(), (Shape{2, 2}));
  EXPECT_EQ(s.at(1, 0), 5.0);
  const Tensor c = concat({m, m}, 0);
  EXPECT_EQ(c.shape(), (Shape{4, 3}));
  EXPECT_EQ(c.at(3, 2), 6.0);
  const Tensor c1 = concat({m, s}, 1);
  EXPECT_EQ(c1.shape(), (Shape{2, 5}));
  EXPECT_EQ(c1.at(1, 4), 6.0);
}

TEST(Ops, CosineToColumns) {
  const Tensor e = Tensor::vector({1, 0});
  const Tensor w = Tensor::matrix(2, 3, {2, 0, -1, 0, 5, 0});
  const Tensor c = cosine_to_columns(e, w);
  EXPECT_NEAR(c[0], 1.0, 1e-15);
  EXPECT_NEAR(c[1], 0.0, 1e-15);
  EXPECT_NEAR(c[2], -1.0, 1e-15);
}

TEST(Ops, AttentionRowsSumToOne) {
  Rng rng(7);
  const Tensor a = attention_weights(random_tensor(rng, {5, 4}), random_tensor(rng, {5, 4}));
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += a.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

// ------------------------------------------------------------ gradient suite

class GradSuite : public ::testing::TestWithParam<transface::testing::GradCase> {};

TEST_P(GradSuite, MatchesCentralDifferences) {
  const transface::testing::GradCase& c = GetParam();
  Rng rng(mix_seed(11, std::hash<std::string>{}(c.name)));
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Tensor> inputs;
    for (const auto& s : c.shapes) inputs.push_back(random_tensor(rng, s, c.lo, c.hi));
    const auto r = grad_check(c.f, inputs);
    EXPECT_LT(r.max_rel_error, kGradTol) << c.name << ": " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradSuite, ::testing::ValuesIn(transface::testing::grad_cases()),
                         [](const ::testing::TestParamInfo<transface::testing::GradCase>& i) { return std::string(i.param.name); });
