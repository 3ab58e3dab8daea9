#include "siatrans/attention.hpp"

#include <cmath>

namespace siatrans {

AttentionConfig AttentionConfig::with_ratio(std::size_t dim, std::size_t heads, double mlp_ratio) {
  AttentionConfig c;
  c.dim = dim;
  c.heads = heads;
  c.ffn_hidden = static_cast<std::size_t>(static_cast<double>(dim) * mlp_ratio);
  return c;
}

void AttentionConfig::validate() const {
  if (heads == 0 || dim % heads != 0) {
    throw UsageError("attention dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (dropout != 0.0) throw UsageError("dropout is not supported");
}

TokenSequence TokenSequence::without_class_token() const {
  if (!has_class_token) return *this;
  if (length() < 2) throw DimensionError("token sequence holds only a class token");
  return {slice(tokens, 1, 1, length() - 1), false};
}

Tensor TokenSequence::class_token() const {
  if (!has_class_token) throw UsageError("token sequence has no class token");
  return reshape(slice(tokens, 1, 0, 1), {batch(), dim()});
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* weights) {
  if (q.dim() != 4 || k.dim() != 4 || v.dim() != 4) {
    throw DimensionError("scaled_dot_attention expects (B,h,N,dk) operands");
  }
  if (q.size(-1) != k.size(-1)) {
    throw DimensionError("scaled_dot_attention: d_k mismatch between Q " + shape_str(q.shape()) + " and K " +
                         shape_str(k.shape()));
  }
  if (k.size(2) != v.size(2)) {
    throw DimensionError("scaled_dot_attention: K " + shape_str(k.shape()) + " and V " + shape_str(v.shape()) +
                         " differ in token count");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  auto logits = scale(matmul(q, transpose(k, -2, -1)), inv_sqrt_dk);
  auto attn = softmax(logits, -1);
  if (weights) *weights = attn;
  return matmul(attn, v);
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t B = x.size(0), N = x.size(1), D = x.size(2);
  if (D % heads != 0) throw DimensionError("split_heads: dim " + std::to_string(D) + " not divisible by heads");
  return permute(reshape(x, {B, N, heads, D / heads}), {0, 2, 1, 3});
}

Tensor merge_heads(const Tensor& x) {
  const std::size_t B = x.size(0), h = x.size(1), N = x.size(2), dk = x.size(3);
  return reshape(permute(x, {0, 2, 1, 3}), {B, N, h * dk});
}

MultiHeadAttention MultiHeadAttention::create(const Scope& scope, const AttentionConfig& config, Rng& rng) {
  config.validate();
  MultiHeadAttention m;
  m.config = config;
  m.query = Linear::create(scope.sub("query"), config.dim, config.dim, rng, config.qkv_bias);
  m.key = Linear::create(scope.sub("key"), config.dim, config.dim, rng, config.qkv_bias);
  m.value = Linear::create(scope.sub("value"), config.dim, config.dim, rng, config.qkv_bias);
  m.out = Linear::create(scope.sub("out"), config.dim, config.dim, rng);
  return m;
}

Tensor MultiHeadAttention::operator()(const Tensor& q_src, const Tensor& kv_src, Tensor* weights) const {
  if (q_src.dim() != 3 || kv_src.dim() != 3 || q_src.size(2) != config.dim || kv_src.size(2) != config.dim ||
      q_src.size(0) != kv_src.size(0)) {
    throw DimensionError("multi-head attention configured for dim " + std::to_string(config.dim) + " got " +
                         shape_str(q_src.shape()) + " and " + shape_str(kv_src.shape()));
  }
  const auto q = split_heads(query(q_src), config.heads);
  const auto k = split_heads(key(kv_src), config.heads);
  const auto v = split_heads(value(kv_src), config.heads);
  return out(merge_heads(scaled_dot_attention(q, k, v, weights)));
}

FeedForward FeedForward::create(const Scope& scope, std::size_t dim, std::size_t hidden, Rng& rng) {
  return {Linear::create(scope.sub("fc1"), dim, hidden, rng), Linear::create(scope.sub("fc2"), hidden, dim, rng)};
}

TransformerLayer TransformerLayer::create(const Scope& scope, const AttentionConfig& config, Rng& rng) {
  TransformerLayer t;
  t.norm1 = LayerNorm::create(scope.sub("norm1"), config.dim);
  t.attention = MultiHeadAttention::create(scope.sub("attn"), config, rng);
  t.norm2 = LayerNorm::create(scope.sub("norm2"), config.dim);
  t.ffn = FeedForward::create(scope.sub("ffn"), config.dim, config.ffn_hidden, rng);
  return t;
}

Tensor TransformerLayer::operator()(const Tensor& x) const {
  const auto h = norm1(x);
  const auto y = add(x, attention(h, h));
  return add(y, ffn(norm2(y)));
}

InteractiveAttention InteractiveAttention::create(const Scope& scope, const AttentionConfig& config, Rng& rng) {
  InteractiveAttention ia;
  ia.attention = MultiHeadAttention::create(scope.sub("attn"), config, rng);
  ia.norm1 = LayerNorm::create(scope.sub("norm1"), config.dim);
  ia.ffn = FeedForward::create(scope.sub("ffn"), config.dim, config.ffn_hidden, rng);
  ia.norm2 = LayerNorm::create(scope.sub("norm2"), config.dim);
  return ia;
}

Tensor InteractiveAttention::attend(const Tensor& x, const Tensor& kv) const {
  const auto y = norm1(add(x, attention(x, kv)));
  return norm2(add(y, ffn(y)));
}

std::pair<Tensor, Tensor> InteractiveAttention::operator()(const Tensor& a, const Tensor& b, bool exchange) const {
  if (a.shape() != b.shape()) {
    throw DimensionError("interactive attention streams differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  if (exchange) return {attend(a, b), attend(b, a)};
  return {attend(a, a), attend(b, b)};
}

}  // namespace siatrans
