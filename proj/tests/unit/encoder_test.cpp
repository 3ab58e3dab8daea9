#include <gtest/gtest.h>

#include <cmath>

#include "siatrans/encoder.hpp"
#include "siatrans/model.hpp"
#include "siatrans/optim.hpp"
#include "support/testing.hpp"

namespace siatrans {
namespace {

using testing::bitwise_equal;
using testing::max_abs_diff;
using testing::random_tensor;

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.image_size = 64;
  c.depth = 1;
  return c;
}

void perturb(const ParameterStore& store, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& e : store.entries()) {
    auto t = e.tensor;
    for (auto& v : t.mutable_data()) v += rng.uniform(-0.05, 0.05);
  }
}

struct EncoderFixture : ::testing::Test {
  ParameterStore store;
  Rng rng{1};
  Encoder encoder = Encoder::create(Scope(store, "encoder"), small_encoder(), rng);

  void SetUp() override { perturb(store, 2); }
};

TEST_F(EncoderFixture, ShapesAtDeskResolution) {
  const auto rgb = random_tensor({2, 3, 64, 64}, rng), depth = random_tensor({2, 3, 64, 64}, rng);
  const auto out = siamese_forward(encoder, rgb, depth);
  EXPECT_EQ(out.top.tokens.shape(), (Shape{4, 16, 384}));
  EXPECT_FALSE(out.top.has_class_token);
  EXPECT_EQ(out.side1.shape(), (Shape{4, 256, 64}));
  EXPECT_EQ(out.side2.shape(), (Shape{4, 64, 64}));
  EXPECT_EQ(out.class_tokens.shape(), (Shape{4, 384}));
}

TEST_F(EncoderFixture, TokenCountsFollowSplitArithmetic) {
  encoder.forward(random_tensor({1, 3, 64, 64}, rng));
  const auto grids = small_encoder().grids();
  const auto counts = encoder.last_token_counts();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(counts[i], grids[i] * grids[i]);
  EXPECT_EQ(grids, (std::array<std::size_t, 3>{16, 8, 4}));

  EncoderConfig full;
  EXPECT_EQ(full.grids(), (std::array<std::size_t, 3>{56, 28, 14}));
  EXPECT_EQ(full.tokens(), 196u);
}

TEST_F(EncoderFixture, IdenticalModalitiesGiveIdenticalRows) {
  const auto x = random_tensor({1, 3, 64, 64}, rng);
  const auto out = siamese_forward(encoder, x, x);
  const auto rows = out.rows_slice(0, 1), other = out.rows_slice(1, 1);
  EXPECT_LT(max_abs_diff(rows.top.tokens, other.top.tokens), 1e-12);
  EXPECT_LT(max_abs_diff(rows.class_tokens, other.class_tokens), 1e-12);
}

TEST_F(EncoderFixture, BatchSplitEquivalenceAtEveryStage) {
  const auto rgb = random_tensor({2, 3, 64, 64}, rng), depth = random_tensor({2, 3, 64, 64}, rng);
  const auto joint = siamese_forward(encoder, rgb, depth);
  const auto split = EncoderOutput::stack(encoder.forward(rgb), encoder.forward(depth));
  EXPECT_LT(max_abs_diff(joint.side1, split.side1), 1e-10);
  EXPECT_LT(max_abs_diff(joint.side2, split.side2), 1e-10);
  EXPECT_LT(max_abs_diff(joint.top.tokens, split.top.tokens), 1e-10);
  EXPECT_LT(max_abs_diff(joint.class_tokens, split.class_tokens), 1e-10);
}

TEST_F(EncoderFixture, RgbRowsPrecedeDepthRows) {
  const auto rgb = random_tensor({2, 3, 64, 64}, rng), depth = random_tensor({2, 3, 64, 64}, rng);
  const auto joint = siamese_forward(encoder, rgb, depth);
  const auto depth_only = encoder.forward(depth);
  EXPECT_LT(max_abs_diff(joint.rows_slice(2, 2).top.tokens, depth_only.top.tokens), 1e-10);
}

TEST_F(EncoderFixture, InputValidation) {
  EXPECT_THROW(encoder.forward(Tensor::zeros({1, 3, 32, 32})), DimensionError);
  EXPECT_THROW(siamese_forward(encoder, Tensor::zeros({1, 3, 64, 64}), Tensor::zeros({2, 3, 64, 64})),
               DimensionError);
  EncoderConfig bad = small_encoder();
  bad.image_size = 72;
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(EncoderInit, ClassTokenAndPositionsStartAtZero) {
  ParameterStore store;
  Rng rng(3);
  Encoder::create(Scope(store, "encoder"), small_encoder(), rng);
  for (const char* name : {"encoder.class_token", "encoder.position"}) {
    const auto* e = store.find(name);
    ASSERT_NE(e, nullptr) << name;
    for (double v : e->tensor.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(SiameseModel, OneBackboneServesBothModalities) {
  SiaTrans model(ModelConfig::desk());
  EXPECT_EQ(model.depth_encoder(), nullptr);
  std::size_t backbones = 0;
  for (const auto& e : model.parameters().entries()) backbones += e.name == "encoder.class_token";
  EXPECT_EQ(backbones, 1u);

  // Editing the single parameter set moves both streams identically.
  Rng rng(4);
  const auto x = random_tensor({1, 3, 64, 64}, rng);
  const auto before = model.encode(x, x);
  auto w = model.parameters().find("encoder.project.weight")->tensor;
  for (auto& v : w.mutable_data()) v *= 1.5;
  const auto after = model.encode(x, x);
  EXPECT_GT(max_abs_diff(before.top.tokens, after.top.tokens), 0.0);
  EXPECT_LT(max_abs_diff(after.rows_slice(0, 1).top.tokens, after.rows_slice(1, 1).top.tokens), 1e-12);
}

TEST(SiameseModel, TwoStreamAblationHasSeparateBackbones) {
  auto config = ModelConfig::desk();
  config.encoder.siamese = false;
  SiaTrans model(config.sync());
  ASSERT_NE(model.depth_encoder(), nullptr);
  Rng rng(5);
  const auto x = random_tensor({1, 3, 64, 64}, rng);
  const auto out = model.encode(x, x);
  EXPECT_EQ(out.rows(), 2u);
}

// ---- heads ----

TEST(ClassHead, ZeroWeightsGiveEvenOdds) {
  ParameterStore store;
  Rng rng(6);
  auto head = Linear::create(Scope(store, "h"), 8, 1, rng);
  for (auto& v : head.weight.mutable_data()) v = 0.0;
  const auto p = sigmoid(class_logit(random_tensor({3, 8}, rng), head));
  ASSERT_EQ(p.shape(), (Shape{3}));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
  EXPECT_NEAR(sigmoid(Tensor::scalar(3.0)).item(), 0.9526, 1e-4);
}

TEST(ClassHead, SeparableToySetIsLearnedWithin200Steps) {
  ParameterStore store;
  Rng rng(7);
  auto head = Linear::create(Scope(store, "h"), 8, 1, rng);
  std::vector<double> tokens, labels;
  for (std::size_t i = 0; i < 16; ++i) {
    const double label = static_cast<double>(i % 2);
    for (std::size_t d = 0; d < 8; ++d) {
      const double offset = d == 0 ? (label > 0 ? 1.0 : -1.0) : 0.0;
      tokens.push_back(offset + rng.uniform(-0.3, 0.3));
    }
    labels.push_back(label);
  }
  const Tensor x({16, 8}, tokens), y({16}, labels);
  Adam adam(store, {1e-2});
  for (int step = 0; step < 200; ++step) {
    store.zero_grad();
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = binary_cross_entropy(sigmoid(class_logit(x, head)), y);
    }
    tape.backward(loss);
    adam.step(1e-2);
  }
  const auto logits = class_logit(x, head);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(logits.data()[i] >= 0.0, labels[i] > 0.5) << i;
}

TEST(RoughHead, ZeroWeightsGiveFlatHalfMap) {
  ParameterStore store;
  Rng rng(8);
  auto head = Linear::create(Scope(store, "h"), 6, 1, rng);
  for (auto& v : head.weight.mutable_data()) v = 0.0;
  const auto map = rough_saliency_head({random_tensor({2, 16, 6}, rng), false}, head, 64);
  ASSERT_EQ(map.shape(), (Shape{2, 1, 64, 64}));
  for (double v : map.data()) EXPECT_EQ(v, 0.5);
}

TEST(RoughHead, ImpulseTokenPeaksInsideItsCell) {
  ParameterStore store;
  Rng rng(9);
  auto head = Linear::create(Scope(store, "h"), 4, 1, rng);
  for (auto& v : head.weight.mutable_data()) v = 0.0;
  head.weight.mutable_data()[0] = 1.0;
  for (std::size_t token : {0u, 6u, 13u}) {
    auto tokens = Tensor::zeros({1, 16, 4});
    tokens.mutable_data()[token * 4] = 5.0;
    const auto map = rough_saliency_head({tokens, false}, head, 64);
    std::size_t best = 0;
    for (std::size_t i = 1; i < map.numel(); ++i) {
      if (map.data()[i] > map.data()[best]) best = i;
    }
    EXPECT_EQ((best / 64) / 16, token / 4);
    EXPECT_EQ((best % 64) / 16, token % 4);
  }
}

TEST(RoughHead, RejectsClassToken) {
  ParameterStore store;
  Rng rng(10);
  auto head = Linear::create(Scope(store, "h"), 4, 1, rng);
  EXPECT_THROW(rough_saliency_head({Tensor::zeros({1, 17, 4}), true}, head, 64), UsageError);
}

TEST(TokenMaps, RoundTrip) {
  Rng rng(11);
  const auto tokens = random_tensor({2, 16, 5}, rng);
  const auto map = tokens_to_map(tokens);
  EXPECT_EQ(map.shape(), (Shape{2, 5, 4, 4}));
  EXPECT_EQ(map.at({1, 3, 2, 1}), tokens.at({1, 9, 3}));
  EXPECT_TRUE(bitwise_equal(map_to_tokens(map), tokens));
  EXPECT_THROW(tokens_to_map(Tensor::zeros({1, 15, 2})), DimensionError);
}

}  // namespace
}  // namespace siatrans
