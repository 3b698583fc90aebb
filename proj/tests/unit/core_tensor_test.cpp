#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "rarelab/core/ops.hpp"

namespace rarelab::core {
namespace {

Tensor<double> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Tensor<double> t({rows, cols});
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

TEST(Tensor, ShapeMustFitData) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  Tensor<float> t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto a = Var<float>::constant(Tensor<float>::matrix(2, 2, {1, 2, 3, 4}));
  auto eye = Var<float>::constant(Tensor<float>::matrix(2, 2, {1, 0, 0, 1}));
  EXPECT_EQ(matmul(a, eye).value().values(), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Matmul, RowVectorTimesColumn) {
  auto a = Var<float>::constant(Tensor<float>::vector({1, 2}));
  auto b = Var<float>::constant(Tensor<float>::matrix(2, 1, {3, 4}));
  auto c = matmul(a, b);
  ASSERT_EQ(c.numel(), 1u);
  EXPECT_FLOAT_EQ(c.value()[0], 11.0f);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(3);
  auto a = random_matrix(4, 5, rng);
  auto b = random_matrix(5, 3, rng);
  auto expected = naive_matmul(a, b);
  auto got = matmul(Var<double>::constant(a), Var<double>::constant(b)).value();
  for (std::size_t i = 0; i < expected.numel(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);

  // float path against the same oracle, relative 1e-5
  auto gotf = matmul(Var<float>::constant(a.cast<float>()), Var<float>::constant(b.cast<float>())).value();
  for (std::size_t i = 0; i < expected.numel(); ++i) {
    EXPECT_LE(std::abs(gotf[i] - expected[i]), 1e-5 * std::max(1.0, std::abs(expected[i])));
  }
}

TEST(Matmul, TransposedVariantMatchesOracle) {
  std::mt19937_64 rng(4);
  auto a = random_matrix(3, 6, rng);
  auto b = random_matrix(7, 6, rng);
  Tensor<double> bt({6, 7});
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt(j, i) = b(i, j);
  auto expected = naive_matmul(a, bt);
  auto got = matmul_nt(Var<double>::constant(a), Var<double>::constant(b)).value();
  for (std::size_t i = 0; i < expected.numel(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  auto a = Var<float>::constant(Tensor<float>({2, 3}));
  auto b = Var<float>::constant(Tensor<float>({4, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Softmax, SymmetricInputIsUniform) {
  auto s = softmax(Tensor<double>::vector({0, 0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Softmax, LogThreeGivesQuarterAndThreeQuarters) {
  auto s = softmax(Tensor<double>::vector({0, std::log(3.0)}));
  EXPECT_NEAR(s[0], 0.25, 1e-12);
  EXPECT_NEAR(s[1], 0.75, 1e-12);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(7);
    for (auto& v : x) v = dist(rng);
    const double c = dist(rng) * 10;
    std::vector<double> shifted = x;
    for (auto& v : shifted) v += c;
    auto a = softmax(Tensor<double>::vector(x));
    auto b = softmax(Tensor<double>::vector(shifted));
    double total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-12);
      EXPECT_GT(a[i], 0.0);
      total += a[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Softmax, EmptyInputIsDomainError) {
  EXPECT_THROW(softmax(Tensor<double>::vector({})), DomainError);
}

TEST(Sigmoid, KnownValuesAndSymmetry) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(100.0), 1.0, 1e-9);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> dist(0, 5);
  double prev = -1;
  for (int i = 0; i < 100; ++i) {
    const double x = dist(rng);
    EXPECT_NEAR(sigmoid(-x), 1 - sigmoid(x), 1e-12);
    EXPECT_GT(sigmoid(x), 0.0);
    EXPECT_LT(sigmoid(x), 1.0);
  }
  for (double x = -10; x <= 10; x += 0.5) {
    EXPECT_GT(sigmoid(x), prev);
    prev = sigmoid(x);
  }
}

TEST(LayerNorm, MatchesDirectFormula) {
  std::mt19937_64 rng(7);
  auto x = random_matrix(3, 8, rng);
  auto gain = random_matrix(1, 8, rng);
  auto bias = random_matrix(1, 8, rng);
  gain.reshape({8});
  bias.reshape({8});
  auto y = layer_norm(Var<double>::constant(x), Var<double>::constant(gain),
                      Var<double>::constant(bias), 1e-5).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += x(r, c) / 8;
    for (std::size_t c = 0; c < 8; ++c) var += (x(r, c) - mean) * (x(r, c) - mean) / 8;
    for (std::size_t c = 0; c < 8; ++c) {
      const double expect = (x(r, c) - mean) / std::sqrt(var + 1e-5) * gain[c] + bias[c];
      EXPECT_NEAR(y(r, c), expect, 1e-10);
    }
  }
}

TEST(Attention, MatchesPerHeadLoops) {
  std::mt19937_64 rng(8);
  const std::size_t m = 5, d = 8, heads = 2, dh = 4;
  auto q = random_matrix(m, d, rng), k = random_matrix(m, d, rng), v = random_matrix(m, d, rng);
  auto got = multi_head_attention(Var<double>::constant(q), Var<double>::constant(k),
                                  Var<double>::constant(v), heads)
                 .value();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> scores(m);
      double mx = -1e300;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        scores[j] = s / std::sqrt(double(dh));
        mx = std::max(mx, scores[j]);
      }
      double z = 0;
      for (auto& s : scores) z += (s = std::exp(s - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double o = 0;
        for (std::size_t j = 0; j < m; ++j) o += scores[j] / z * v(j, h * dh + c);
        EXPECT_NEAR(got(i, h * dh + c), o, 1e-12);
      }
    }
  }
}

TEST(GatherRows, OutOfRangeIsDomainError) {
  auto table = Var<float>::constant(Tensor<float>({3, 2}));
  std::vector<std::size_t> ids{0, 3};
  EXPECT_THROW(gather_rows(table, std::span<const std::size_t>(ids)), DomainError);
}

}  // namespace
}  // namespace rarelab::core
