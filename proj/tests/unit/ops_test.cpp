#include <gtest/gtest.h>

#include <cmath>
#include <ostream>

#include "siatrans/ops.hpp"
#include "support/testing.hpp"

namespace siatrans {
namespace {

using testing::gradcheck;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::weighted_sum;

constexpr double kOpTol = 1e-6;

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

// ---- matmul ----

TEST(Matmul, IdentityLeavesOperand) {
  const auto y = matmul(t2(2, 2, {1, 0, 0, 1}), t2(2, 2, {5, 6, 7, 8}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{5, 6, 7, 8}));
}

TEST(Matmul, RowTimesColumn) {
  EXPECT_DOUBLE_EQ(matmul(t2(1, 2, {1, 2}), t2(2, 1, {3, 4})).item(), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("(2,3)"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  const auto r = gradcheck([](const auto& in) { return matmul(in[0], in[1]); },
                           {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

TEST(Matmul, BatchedAndSharedOperandGradients) {
  Rng rng(2);
  const auto r = gradcheck(
      [](const auto& in) { return add(weighted_sum(matmul(in[0], in[1])), weighted_sum(matmul(in[0], in[2]), 3)); },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({2, 4, 2}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

TEST(Matmul, MatchesLoopOracle) {
  Rng rng(3);
  const auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 4, 5}, rng);
  const auto y = matmul(a, b);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < 4; ++p) s += a.at({n, i, p}) * b.at({n, p, j});
        EXPECT_NEAR(y.at({n, i, j}), s, 1e-12);
      }
    }
  }
}

// ---- softmax ----

TEST(Softmax, UniformLogits) {
  const auto y = softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitDoesNotOverflow) {
  const auto y = softmax(Tensor({2}, {1000, 0}), 0);
  EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
}

TEST(Softmax, NonFiniteInputThrows) {
  EXPECT_THROW(softmax(Tensor({2}, {NAN, 0}), 0), NumericError);
  EXPECT_THROW(softmax(Tensor({2}, {INFINITY, 0}), 0), NumericError);
}

TEST(Softmax, SlicesSumToOne) {
  Rng rng(4);
  const auto y = softmax(random_tensor({3, 4, 7}, rng, -5, 5), 1);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t c = 0; c < 7; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_GT(y.at({a, b, c}), 0.0);
        s += y.at({a, b, c});
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  const auto r = gradcheck([](const auto& in) { return softmax(in[0], 0); }, {random_tensor({5}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
  const auto r2 =
      gradcheck([](const auto& in) { return softmax(in[0], -1); }, {random_tensor({2, 3, 4}, rng)});
  EXPECT_LT(r2.max_rel_err, kOpTol);
}

// ---- layer_norm ----

TEST(LayerNorm, ConstantRowGivesBias) {
  const auto y = layer_norm(Tensor::full({1, 4}, 3.0), Tensor::full({4}, 2.0), Tensor({4}, {1, 2, 3, 4}), 1e-5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], static_cast<double>(i + 1), 1e-12);
}

TEST(LayerNorm, TokensAreIndependentOfTheirBatch) {
  Rng rng(6);
  const auto token = random_tensor({1, 1, 8}, rng);
  const auto gain = random_tensor({8}, rng), bias = random_tensor({8}, rng);
  const auto batch1 = concat({token, random_tensor({1, 1, 8}, rng, -10, 10)}, 1);
  const auto batch2 = concat({random_tensor({1, 1, 8}, rng), token}, 1);
  const auto y1 = slice(layer_norm(concat({batch1, random_tensor({1, 2, 8}, rng)}, 0), gain, bias), 1, 0, 1);
  const auto y2 = slice(layer_norm(batch2, gain, bias), 1, 1, 1);
  EXPECT_EQ(max_abs_diff(slice(y1, 0, 0, 1), y2), 0.0);
}

TEST(LayerNorm, NormalizedStatistics) {
  Rng rng(7);
  const auto y = layer_norm(random_tensor({4, 6, 16}, rng, -3, 3), Tensor::full({16}, 1.0), Tensor::zeros({16}), 0.0);
  for (std::size_t r = 0; r < 24; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 16; ++i) m += y.data()[r * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.data()[r * 16 + i] - m, 2);
    EXPECT_LT(std::fabs(m), 1e-10);
    EXPECT_NEAR(v / 16, 1.0, 1e-6);
  }
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  const auto r = gradcheck([](const auto& in) { return layer_norm(in[0], in[1], in[2]); },
                           {random_tensor({2, 3, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)});
  EXPECT_LT(r.max_rel_err, 1e-5);
}

// ---- batch_norm ----

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  Rng rng(9);
  const auto x = random_tensor({2, 3, 4, 4}, rng);
  BatchNormStats stats{Tensor::zeros({3}), Tensor::full({3}, 1.0)};
  const auto y = batch_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), stats, false, 0.1, 0.0);
  EXPECT_EQ(max_abs_diff(x, y), 0.0);
}

TEST(BatchNorm, TwoConstantMapsNormalizeToPlusMinusOne) {
  std::vector<double> v(2 * 4, 0.0);
  std::fill(v.begin() + 4, v.end(), 2.0);
  BatchNormStats stats{Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  const auto y = batch_norm(Tensor({2, 1, 2, 2}, v), Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, true, 1.0,
                            0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(y.data()[i], -1.0, 1e-12);
    EXPECT_NEAR(y.data()[4 + i], 1.0, 1e-12);
  }
  EXPECT_NEAR(stats.running_mean.item(), 1.0, 1e-12);
  // Unbiased variance of four 0s and four 2s.
  EXPECT_NEAR(stats.running_var.item(), 8.0 / 7.0, 1e-12);
}

TEST(BatchNorm, SingleRowTrainingThrows) {
  BatchNormStats stats{Tensor::zeros({1}), Tensor::full({1}, 1.0)};
  EXPECT_THROW(batch_norm(Tensor::zeros({1, 1, 2, 2}), Tensor::full({1}, 1.0), Tensor::zeros({1}), stats, true),
               NumericError);
}

TEST(BatchNorm, TrainingGradientMatchesFiniteDifferences) {
  Rng rng(10);
  const auto r = gradcheck(
      [](const auto& in) {
        BatchNormStats stats{Tensor::zeros({3}), Tensor::full({3}, 1.0)};
        return batch_norm(in[0], in[1], in[2], stats, true);
      },
      {random_tensor({4, 3, 8, 8}, rng), random_tensor({3}, rng), random_tensor({3}, rng)}, 60);
  EXPECT_LT(r.max_rel_err, 1e-5);
}

TEST(BatchNorm, EvalGradientMatchesFiniteDifferences) {
  Rng rng(11);
  const auto mean = random_tensor({3}, rng), var = random_tensor({3}, rng, 0.5, 2.0);
  const auto r = gradcheck(
      [&](const auto& in) {
        BatchNormStats stats{mean, var};
        return batch_norm(in[0], in[1], in[2], stats, false);
      },
      {random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  EXPECT_LT(r.max_rel_err, 1e-5);
}

// ---- conv2d ----

TEST(Conv2d, UnitOneByOneKernelIsIdentity) {
  Rng rng(12);
  const auto x = random_tensor({2, 1, 5, 4}, rng);
  EXPECT_EQ(max_abs_diff(conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor(), 1, 0), x), 0.0);
}

TEST(Conv2d, OnesKernelSpreadsCenterImpulse) {
  std::vector<double> v(9, 0.0);
  v[4] = 1.0;
  const auto y = conv2d(Tensor({1, 1, 3, 3}, v), Tensor::full({1, 1, 3, 3}, 1.0), Tensor(), 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (double o : y.data()) EXPECT_EQ(o, 1.0);
}

TEST(Conv2d, OutputExtentAndChannelCheck) {
  EXPECT_EQ(conv2d(Tensor::zeros({1, 2, 7, 6}), Tensor::zeros({3, 2, 3, 3}), Tensor(), 2, 1).shape(),
            (Shape{1, 3, 4, 3}));
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 5, 5}), Tensor::zeros({3, 4, 3, 3}), Tensor(), 1, 1), DimensionError);
}

TEST(Conv2d, MatchesCrossCorrelationLoops) {
  Rng rng(13);
  const auto x = random_tensor({2, 3, 5, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
  const auto y = conv2d(x, w, b, 2, 1);
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t oy = 0; oy < y.size(2); ++oy) {
        for (std::size_t ox = 0; ox < y.size(3); ++ox) {
          double s = b.data()[o];
          for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t ki = 0; ki < 3; ++ki) {
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const long iy = static_cast<long>(oy * 2 + ki) - 1, ix = static_cast<long>(ox * 2 + kj) - 1;
                if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
                s += w.at({o, c, ki, kj}) * x.at({n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
            }
          }
          EXPECT_NEAR(y.at({n, o, oy, ox}), s, 1e-12);
        }
      }
    }
  }
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  const auto r = gradcheck([](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
                           {random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
  EXPECT_LT(r.max_rel_err, 1e-5);
  const auto r2 = gradcheck([](const auto& in) { return conv2d(in[0], in[1], Tensor(), 2, 0); },
                            {random_tensor({2, 2, 6, 5}, rng), random_tensor({2, 2, 1, 1}, rng)});
  EXPECT_LT(r2.max_rel_err, 1e-5);
}

TEST(Conv2d, WideChannelGradientMatchesFiniteDifferences) {
  Rng rng(26);
  const auto r = gradcheck([](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); },
                           {random_tensor({2, 24, 16, 16}, rng), random_tensor({8, 24, 3, 3}, rng),
                            random_tensor({8}, rng)},
                           30);
  EXPECT_LT(r.max_rel_err, 1e-5);
}

// ---- unfold ----

TEST(Unfold, WholeImagePatch) {
  const auto x = Tensor({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = unfold(x, 2, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Unfold, DisjointQuadrants) {
  std::vector<double> v(16);
  for (std::size_t i = 0; i < 16; ++i) v[i] = static_cast<double>(i);
  const auto y = unfold(Tensor({1, 1, 4, 4}, v), 2, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 4}));
  const std::vector<std::vector<double>> expected{{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(y.at({0, t, e}), expected[t][e]);
  }
}

TEST(Unfold, MatchesIndexArithmeticOracle) {
  Rng rng(15);
  const std::size_t C = 3, k = 3, s = 2, p = 1;
  const auto x = random_tensor({2, C, 8, 8}, rng);
  const auto y = unfold(x, k, s, p);
  ASSERT_EQ(y.shape(), (Shape{2, 16, k * k * C}));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t oy = 0; oy < 4; ++oy) {
      for (std::size_t ox = 0; ox < 4; ++ox) {
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            for (std::size_t c = 0; c < C; ++c) {
              const long iy = static_cast<long>(oy * s + ki) - static_cast<long>(p);
              const long ix = static_cast<long>(ox * s + kj) - static_cast<long>(p);
              const double expect = (iy < 0 || ix < 0 || iy >= 8 || ix >= 8)
                                        ? 0.0
                                        : x.at({n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              EXPECT_EQ(y.at({n, oy * 4 + ox, (ki * k + kj) * C + c}), expect);
            }
          }
        }
      }
    }
  }
}

TEST(Unfold, EmptyGridThrows) { EXPECT_THROW(unfold(Tensor::zeros({1, 1, 2, 2}), 3, 1, 0), DimensionError); }

TEST(Unfold, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  const auto r = gradcheck([](const auto& in) { return unfold(in[0], 3, 2, 1); },
                           {random_tensor({2, 2, 6, 6}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

// ---- upsample ----

TEST(Upsample, ConstantStaysConstant) {
  const auto y = upsample_bilinear(Tensor::full({1, 2, 3, 3}, 0.7), 7, 11);
  for (double v : y.data()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(Upsample, SinglePixelSource) {
  const auto y = upsample_bilinear(Tensor::full({1, 1, 1, 1}, -2.5), 5, 5);
  for (double v : y.data()) EXPECT_EQ(v, -2.5);
}

TEST(Upsample, HalfPixelOracle) {
  const auto x = Tensor({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = upsample_bilinear(x, 4, 4);
  auto src = [](double o) { return std::clamp((o + 0.5) * 0.5 - 0.5, 0.0, 1.0); };
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double fy = src(static_cast<double>(i)), fx = src(static_cast<double>(j));
      const double expect = (1 - fy) * ((1 - fx) * 1 + fx * 2) + fy * ((1 - fx) * 3 + fx * 4);
      EXPECT_NEAR(y.at({0, 0, i, j}), expect, 1e-12);
    }
  }
}

TEST(Upsample, DownscalingThrows) {
  EXPECT_THROW(upsample_bilinear(Tensor::zeros({1, 1, 4, 4}), 2, 4), UsageError);
}

TEST(Upsample, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  const auto r = gradcheck([](const auto& in) { return upsample_bilinear(in[0], 8, 6); },
                           {random_tensor({2, 2, 4, 3}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

// ---- elementwise suite ----

TEST(Elementwise, Definitions) {
  EXPECT_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5);
  EXPECT_EQ(relu(Tensor::scalar(-3)).item(), 0.0);
  EXPECT_EQ(relu(Tensor::scalar(3)).item(), 3.0);
  EXPECT_EQ(abs(Tensor::scalar(-2)).item(), 2.0);
  EXPECT_EQ(scale(Tensor::scalar(2), -1.5).item(), -3.0);
  EXPECT_NEAR(gelu(Tensor::scalar(1.0)).item(), 0.5 * (1 + std::erf(1 / std::sqrt(2.0))), 1e-15);
}

TEST(Elementwise, ConcatThenSliceRoundTrips) {
  Rng rng(18);
  const auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 5, 4}, rng);
  const auto c = concat({a, b}, 1);
  EXPECT_TRUE(testing::bitwise_equal(slice(c, 1, 0, 3), a));
  EXPECT_TRUE(testing::bitwise_equal(slice(c, 1, 3, 5), b));
  EXPECT_THROW(concat({a, Tensor::zeros({2, 3, 5})}, 1), DimensionError);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(mul(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(reshape(Tensor::zeros({2, 3}), {5}), DimensionError);
  EXPECT_THROW(add_broadcast(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
}

struct UnaryCase {
  const char* name;
  std::function<Tensor(const Tensor&)> fn;
  double lo, hi;
};

void PrintTo(const UnaryCase& c, std::ostream* os) { *os << c.name; }

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesFiniteDifferences) {
  Rng rng(19);
  const auto& c = GetParam();
  auto x = random_tensor({3, 4}, rng, c.lo, c.hi);
  // Keep probes away from kinks.
  for (auto& v : x.mutable_data()) {
    if (std::fabs(v) < 0.05) v += 0.1;
  }
  const auto r = gradcheck([&](const auto& in) { return c.fn(in[0]); }, {x});
  EXPECT_LT(r.max_rel_err, kOpTol) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(UnaryCase{"relu", [](const Tensor& x) { return relu(x); }, -2, 2},
                      UnaryCase{"gelu", [](const Tensor& x) { return gelu(x); }, -3, 3},
                      UnaryCase{"sigmoid", [](const Tensor& x) { return sigmoid(x); }, -4, 4},
                      UnaryCase{"abs", [](const Tensor& x) { return abs(x); }, -2, 2},
                      UnaryCase{"scale", [](const Tensor& x) { return scale(x, -0.7); }, -2, 2},
                      UnaryCase{"reshape", [](const Tensor& x) { return reshape(x, {2, 6}); }, -2, 2},
                      UnaryCase{"transpose", [](const Tensor& x) { return transpose(x, 0, 1); }, -2, 2},
                      UnaryCase{"permute", [](const Tensor& x) { return permute(reshape(x, {2, 3, 2}), {2, 0, 1}); },
                                -2, 2},
                      UnaryCase{"slice", [](const Tensor& x) { return slice(x, 1, 1, 2); }, -2, 2},
                      UnaryCase{"expand", [](const Tensor& x) { return expand(reshape(x, {3, 1, 4}), 1, 3); }, -2, 2},
                      UnaryCase{"sum", [](const Tensor& x) { return sum(mul(x, x)); }, -2, 2},
                      UnaryCase{"mean", [](const Tensor& x) { return mean(mul(x, x)); }, -2, 2},
                      UnaryCase{"mean_axis", [](const Tensor& x) { return mean_axis(x, 0); }, -2, 2},
                      UnaryCase{"max_axis", [](const Tensor& x) { return max_axis(x, 1); }, -2, 2}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Elementwise, BinaryGradients) {
  Rng rng(20);
  const auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
  EXPECT_LT(gradcheck([](const auto& in) { return add(in[0], in[1]); }, {a, b}).max_rel_err, kOpTol);
  EXPECT_LT(gradcheck([](const auto& in) { return sub(in[0], in[1]); }, {a, b}).max_rel_err, kOpTol);
  EXPECT_LT(gradcheck([](const auto& in) { return mul(in[0], in[1]); }, {a, b}).max_rel_err, kOpTol);
  EXPECT_LT(gradcheck([](const auto& in) { return add_broadcast(in[0], in[1]); }, {a, bias}).max_rel_err,
            kOpTol);
  EXPECT_LT(gradcheck([](const auto& in) { return concat({in[0], in[1]}, 0); }, {a, b}).max_rel_err,
            kOpTol);
}

TEST(Elementwise, SharedInputAccumulatesGradient) {
  Rng rng(21);
  const auto r = gradcheck([](const auto& in) { return mul(in[0], add(in[0], scale(in[0], 2.0))); },
                           {random_tensor({4}, rng)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

// ---- cross-entropy ----

TEST(BinaryCrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(22);
  auto target = random_tensor({2, 1, 3, 3}, rng, 0, 1);
  for (auto& v : target.mutable_data()) v = v > 0.5 ? 1.0 : 0.0;
  const auto r = gradcheck([&](const auto& in) { return binary_cross_entropy(in[0], target); },
                           {random_tensor({2, 1, 3, 3}, rng, 0.05, 0.95)});
  EXPECT_LT(r.max_rel_err, kOpTol);
}

// ---- tape ----

TEST(Tape, BackwardIsBitwiseDeterministic) {
  auto run = [] {
    Rng rng(23);
    auto a = random_tensor({3, 5}, rng, -1, 1, true), b = random_tensor({5, 4}, rng, -1, 1, true);
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(gelu(matmul(a, b)));
    }
    tape.backward(loss);
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  const auto g1 = run(), g2 = run();
  EXPECT_EQ(0, std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)));
}

TEST(Tape, EveryTrackedLeafReceivesGradient) {
  Rng rng(24);
  auto a = random_tensor({2, 2}, rng, -1, 1, true), b = random_tensor({2, 2}, rng, -1, 1, true);
  auto unused_path = random_tensor({2, 2}, rng, -1, 1, true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(add(mul(a, b), scale(unused_path, 0.0)));
  }
  tape.backward(loss);
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_TRUE(unused_path.has_grad());
  EXPECT_EQ(a.grad().size(), a.numel());
}

TEST(Tape, NoRecordingOutsideScope) {
  Rng rng(25);
  auto a = random_tensor({2, 2}, rng, -1, 1, true);
  Tape tape;
  { TapeScope scope(tape); }
  (void)sum(a);
  EXPECT_EQ(tape.size(), 0u);
  {
    TapeScope scope(tape);
    NoGradScope off;
    (void)sum(a);
  }
  EXPECT_EQ(tape.size(), 0u);
}

}  // namespace
}  // namespace siatrans
