#include "siatrans/encoder.hpp"

#include <cmath>

namespace siatrans {

std::array<std::size_t, 3> EncoderConfig::grids() const {
  std::array<std::size_t, 3> g{};
  std::size_t side = image_size;
  for (std::size_t i = 0; i < 3; ++i) {
    side = splits[i].output_extent(side);
    g[i] = side;
  }
  return g;
}

void EncoderConfig::validate() const {
  if (image_size == 0 || image_size % 16 != 0) {
    throw UsageError("input side " + std::to_string(image_size) + " is not a positive multiple of 16");
  }
  const auto g = grids();
  if (g[0] != image_size / 4 || g[1] != image_size / 8 || g[2] != image_size / 16) {
    throw UsageError("soft-split specs do not reduce the grid by 4, 8 and 16");
  }
  AttentionConfig::with_ratio(embed_dim, heads, mlp_ratio).validate();
}

Tensor tokens_to_map(const Tensor& tokens) {
  const std::size_t B = tokens.size(0), N = tokens.size(1), C = tokens.size(2);
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(N))));
  if (g * g != N) throw DimensionError("token count " + std::to_string(N) + " is not a perfect square");
  return reshape(transpose(tokens, 1, 2), {B, C, g, g});
}

Tensor map_to_tokens(const Tensor& map) {
  const std::size_t B = map.size(0), C = map.size(1), HW = map.size(2) * map.size(3);
  return transpose(reshape(map, {B, C, HW}), 1, 2);
}

TokenTransformer TokenTransformer::create(const Scope& scope, std::size_t in_dim, std::size_t dim, double mlp_ratio,
                                          Rng& rng) {
  TokenTransformer t;
  t.norm1 = LayerNorm::create(scope.sub("norm1"), in_dim);
  t.query = Linear::create(scope.sub("query"), in_dim, dim, rng, false);
  t.key = Linear::create(scope.sub("key"), in_dim, dim, rng, false);
  t.value = Linear::create(scope.sub("value"), in_dim, dim, rng, false);
  t.proj = Linear::create(scope.sub("proj"), dim, dim, rng);
  t.norm2 = LayerNorm::create(scope.sub("norm2"), dim);
  t.mlp = FeedForward::create(scope.sub("mlp"), dim, static_cast<std::size_t>(static_cast<double>(dim) * mlp_ratio),
                              rng);
  return t;
}

Tensor TokenTransformer::operator()(const Tensor& x) const {
  const auto h = norm1(x);
  const auto v = value(h);
  const auto attended = scaled_dot_attention(split_heads(query(h), 1), split_heads(key(h), 1), split_heads(v, 1));
  const auto y = add(v, proj(merge_heads(attended)));
  return add(y, mlp(norm2(y)));
}

EncoderOutput EncoderOutput::stack(const EncoderOutput& first, const EncoderOutput& second) {
  EncoderOutput out;
  out.side1 = concat({first.side1, second.side1}, 0);
  out.side2 = concat({first.side2, second.side2}, 0);
  out.top = {concat({first.top.tokens, second.top.tokens}, 0), false};
  out.class_tokens = concat({first.class_tokens, second.class_tokens}, 0);
  return out;
}

EncoderOutput EncoderOutput::rows_slice(std::size_t start, std::size_t count) const {
  EncoderOutput out;
  out.side1 = slice(side1, 0, start, count);
  out.side2 = slice(side2, 0, start, count);
  out.top = {slice(top.tokens, 0, start, count), false};
  out.class_tokens = slice(class_tokens, 0, start, count);
  return out;
}

Encoder Encoder::create(const Scope& scope, const EncoderConfig& config, Rng& rng) {
  config.validate();
  Encoder e;
  e.config_ = config;
  const auto& sp = config.splits;
  e.t2t1_ = TokenTransformer::create(scope.sub("t2t1"), 3 * sp[0].kernel * sp[0].kernel, config.t2t_dim,
                                     config.t2t_mlp_ratio, rng);
  e.t2t2_ = TokenTransformer::create(scope.sub("t2t2"), config.t2t_dim * sp[1].kernel * sp[1].kernel,
                                     config.t2t_dim, config.t2t_mlp_ratio, rng);
  e.project_ = Linear::create(scope.sub("project"), config.t2t_dim * sp[2].kernel * sp[2].kernel,
                              config.embed_dim, rng);
  e.class_token_ = scope.add("class_token", Tensor::zeros({1, 1, config.embed_dim}));
  e.position_ = scope.add("position", Tensor::zeros({config.tokens() + 1, config.embed_dim}));
  const auto attn = AttentionConfig::with_ratio(config.embed_dim, config.heads, config.mlp_ratio);
  for (std::size_t i = 0; i < config.depth; ++i) {
    e.blocks_.push_back(TransformerLayer::create(scope.sub("block" + std::to_string(i)), attn, rng));
  }
  e.norm_ = LayerNorm::create(scope.sub("norm"), config.embed_dim);
  return e;
}

EncoderOutput Encoder::forward(const Tensor& images) const {
  const std::size_t S = config_.image_size;
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != S || images.size(3) != S) {
    throw DimensionError("encoder expects (n,3," + std::to_string(S) + "," + std::to_string(S) + "), got " +
                         shape_str(images.shape()));
  }
  const std::size_t rows = images.size(0);
  if (rows == 0) throw DimensionError("encoder input has an empty batch");
  const auto& sp = config_.splits;

  EncoderOutput out;
  auto x = unfold(images, sp[0].kernel, sp[0].stride, sp[0].padding);
  x = t2t1_(x);
  out.side1 = x;
  last_counts_[0] = x.size(1);
  x = unfold(tokens_to_map(x), sp[1].kernel, sp[1].stride, sp[1].padding);
  x = t2t2_(x);
  out.side2 = x;
  last_counts_[1] = x.size(1);
  x = unfold(tokens_to_map(x), sp[2].kernel, sp[2].stride, sp[2].padding);
  x = project_(x);
  last_counts_[2] = x.size(1);

  std::vector<Tensor> cls(rows, reshape(class_token_, {1, 1, config_.embed_dim}));
  x = concat({concat(cls, 0), x}, 1);
  x = add_broadcast(x, position_);
  for (const auto& block : blocks_) x = block(x);
  x = norm_(x);

  const TokenSequence seq{x, true};
  out.class_tokens = seq.class_token();
  out.top = seq.without_class_token();
  return out;
}

EncoderOutput siamese_forward(const Encoder& encoder, const Tensor& rgb, const Tensor& depth3) {
  if (rgb.shape() != depth3.shape()) {
    throw DimensionError("RGB " + shape_str(rgb.shape()) + " and depth " + shape_str(depth3.shape()) +
                         " batches differ");
  }
  return encoder.forward(concat({rgb, depth3}, 0));
}

EncoderOutput two_stream_forward(const Encoder& rgb_encoder, const Encoder& depth_encoder, const Tensor& rgb,
                                 const Tensor& depth3) {
  if (rgb.shape() != depth3.shape()) {
    throw DimensionError("RGB " + shape_str(rgb.shape()) + " and depth " + shape_str(depth3.shape()) +
                         " batches differ");
  }
  return EncoderOutput::stack(rgb_encoder.forward(rgb), depth_encoder.forward(depth3));
}

Tensor class_logit(const Tensor& class_tokens, const Linear& head) {
  return reshape(head(class_tokens), {class_tokens.size(0)});
}

Tensor rough_saliency_head(const TokenSequence& tokens, const Linear& head, std::size_t target) {
  if (tokens.has_class_token) throw UsageError("rough saliency head received a sequence with a class token");
  return sigmoid(upsample_bilinear(tokens_to_map(head(tokens.tokens)), target, target));
}

}  // namespace siatrans
