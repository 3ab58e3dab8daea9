#pragma once

#include <utility>

#include "siatrans/nn.hpp"

namespace siatrans {

struct AttentionConfig {
  std::size_t dim = 64;
  std::size_t heads = 1;
  std::size_t ffn_hidden = 256;  // x4 expansion by default
  double dropout = 0.0;          // kept at zero; equivalence tests rely on it
  bool qkv_bias = false;

  static AttentionConfig with_ratio(std::size_t dim, std::size_t heads, double mlp_ratio);
  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

/// (B, N, D) activation. When `has_class_token` is set, token 0 is the class
/// token and must be stripped before any spatial reshape.
struct TokenSequence {
  Tensor tokens;
  bool has_class_token = false;

  std::size_t batch() const { return tokens.size(0); }
  std::size_t length() const { return tokens.size(1); }
  std::size_t dim() const { return tokens.size(2); }
  /// Spatial tokens only.
  TokenSequence without_class_token() const;
  /// Token 0 of every row, shape (B, D).
  Tensor class_token() const;
};

/// softmax(Q K^T / sqrt(d_k)) V for Q (B,h,Nq,dk) and K,V (B,h,Nkv,dk).
/// When `weights` is non-null it receives the (B,h,Nq,Nkv) attention matrix.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, Tensor* weights = nullptr);

/// (B,N,h*dk) -> (B,h,N,dk) and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);

/// Projections, per-head attention, head concat and output projection.
/// Residuals and normalization belong to the enclosing layer.
struct MultiHeadAttention {
  AttentionConfig config;
  Linear query, key, value, out;

  static MultiHeadAttention create(const Scope& scope, const AttentionConfig& config, Rng& rng);
  Tensor operator()(const Tensor& q_src, const Tensor& kv_src, Tensor* weights = nullptr) const;
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(const Scope& scope, std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

/// Pre-norm block: x + MHSA(LN(x)), then + FFN(LN(.)).
struct TransformerLayer {
  LayerNorm norm1;
  MultiHeadAttention attention;
  LayerNorm norm2;
  FeedForward ffn;

  static TransformerLayer create(const Scope& scope, const AttentionConfig& config, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Two-stream attention sharing one parameter set. Stream a queries the keys
/// and values of stream b and vice versa; each direction is followed by
/// residual + LayerNorm and a feed-forward sub-block with residual + LayerNorm.
struct InteractiveAttention {
  MultiHeadAttention attention;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;

  static InteractiveAttention create(const Scope& scope, const AttentionConfig& config, Rng& rng);
  /// With `exchange` off each stream attends to itself (the ablation without
  /// the Key/Value swap).
  std::pair<Tensor, Tensor> operator()(const Tensor& a, const Tensor& b, bool exchange = true) const;
  /// One direction: queries from `x`, keys/values from `kv`.
  Tensor attend(const Tensor& x, const Tensor& kv) const;
};

}  // namespace siatrans
