#include "siatrans/decoder.hpp"

#include "siatrans/encoder.hpp"

namespace siatrans {

namespace {

Tensor upsample_to(const Tensor& x, std::size_t side) {
  if (x.size(2) == side && x.size(3) == side) return x;
  return upsample_bilinear(x, side, side);
}

Tensor upsample2(const Tensor& x) { return upsample_bilinear(x, 2 * x.size(2), 2 * x.size(3)); }

}  // namespace

DoubleConv DoubleConv::create(const Scope& scope, std::size_t in, std::size_t out, Rng& rng) {
  return {Conv2d::create(scope.sub("conv1"), in, out, 3, rng), BatchNorm2d::create(scope.sub("bn1"), out),
          Conv2d::create(scope.sub("conv2"), out, out, 3, rng), BatchNorm2d::create(scope.sub("bn2"), out)};
}

Tensor DoubleConv::operator()(const Tensor& x, bool training) const {
  auto y = relu(bn1(conv1(x), training));
  return relu(bn2(conv2(y), training));
}

Tensor spatial_attention(const Tensor& alpha, const Conv2d& conv) {
  return sigmoid(conv(concat({max_axis(alpha, 1), mean_axis(alpha, 1)}, 1)));
}

AdaptiveFusion AdaptiveFusion::create(const Scope& scope, std::size_t width, Rng& rng) {
  AdaptiveFusion f;
  f.spatial = Conv2d::create(scope.sub("spatial"), 2, 1, 1, rng);
  f.theta_conv = Conv2d::create(scope.sub("theta_conv"), 3 * width, width, 3, rng);
  f.theta_bn = BatchNorm2d::create(scope.sub("theta_bn"), width);
  f.eta_conv = Conv2d::create(scope.sub("eta_conv"), width, width, 3, rng);
  f.eta_bn = BatchNorm2d::create(scope.sub("eta_bn"), width);
  return f;
}

Tensor AdaptiveFusion::operator()(const Tensor& d1, const Tensor& d2, const Tensor& d3, bool training,
                                  Tensor* nu_out) const {
  const std::size_t side = d3.size(2);
  const auto alpha = concat({upsample_to(d1, side), upsample_to(d2, side), d3}, 1);
  if (alpha.size(2) != side || alpha.size(3) != side) {
    throw DimensionError("adaptive fusion: resolution mismatch " + shape_str(alpha.shape()));
  }
  const auto nu = spatial_attention(alpha, spatial);
  if (nu_out) *nu_out = nu;
  const auto theta = relu(theta_bn(theta_conv(alpha), training));
  const auto weighted = mul(expand(nu, 1, theta.size(1)), theta);
  return relu(eta_bn(eta_conv(weighted), training));
}

Decoder Decoder::create(const Scope& scope, const DecoderConfig& config, Rng& rng) {
  Decoder d;
  d.config_ = config;
  const std::size_t w = config.width;
  d.side1_proj_ = Conv2d::create(scope.sub("side1_proj"), config.side_dim, w, 1, rng);
  d.side2_proj_ = Conv2d::create(scope.sub("side2_proj"), config.side_dim, w, 1, rng);
  d.blocks_[0] = DoubleConv::create(scope.sub("block1"), config.fused_dim, w, rng);
  d.blocks_[1] = DoubleConv::create(scope.sub("block2"), w, w, rng);
  d.blocks_[2] = DoubleConv::create(scope.sub("block3"), w, w, rng);
  if (config.adaptive_fusion) d.fusion_ = AdaptiveFusion::create(scope.sub("fusion"), w, rng);
  d.final_head_ = Conv2d::create(scope.sub("final_head"), w, 1, 3, rng);
  for (std::size_t i = 0; i < 3; ++i) {
    d.side_heads_[i] = Conv2d::create(scope.sub("side_head" + std::to_string(i + 1)), w, 1, 3, rng);
  }
  return d;
}

DecoderOutput Decoder::operator()(const Tensor& fused, const Tensor& side1, const Tensor& side2,
                                  bool training) const {
  const std::size_t S = config_.image_size;
  if (fused.dim() != 3 || fused.size(2) != config_.fused_dim) {
    throw DimensionError("decoder expects (B,N," + std::to_string(config_.fused_dim) + ") fused tokens, got " +
                         shape_str(fused.shape()));
  }
  const auto x0 = tokens_to_map(fused);
  if (x0.size(2) * 16 != S) {
    throw DimensionError("fused token grid " + std::to_string(x0.size(2)) + " does not match input side " +
                         std::to_string(S));
  }
  const auto s1 = side1_proj_(tokens_to_map(side1));
  const auto s2 = side2_proj_(tokens_to_map(side2));

  DecoderOutput out;
  out.d1 = add(blocks_[0](upsample2(x0), training), s2);
  out.d2 = add(blocks_[1](upsample2(out.d1), training), s1);
  out.d3 = blocks_[2](upsample2(out.d2), training);
  out.eta = config_.adaptive_fusion ? fusion_(out.d1, out.d2, out.d3, training) : out.d3;
  out.final_map = sigmoid(upsample_to(final_head_(out.eta), S));
  const std::array<Tensor, 3> feats{out.d1, out.d2, out.d3};
  for (std::size_t i = 0; i < 3; ++i) out.side_maps[i] = sigmoid(upsample_to(side_heads_[i](feats[i]), S));
  return out;
}

}  // namespace siatrans
