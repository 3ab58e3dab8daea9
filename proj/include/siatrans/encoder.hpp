#pragma once

#include <array>
#include <optional>

#include "siatrans/attention.hpp"

namespace siatrans {

struct SoftSplit {
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;

  std::size_t output_extent(std::size_t input) const { return (input + 2 * padding - kernel) / stride + 1; }
};

struct EncoderConfig {
  std::size_t image_size = 224;
  std::array<SoftSplit, 3> splits{{{7, 4, 2}, {3, 2, 1}, {3, 2, 1}}};
  std::size_t t2t_dim = 64;
  double t2t_mlp_ratio = 1.0;
  std::size_t embed_dim = 384;
  std::size_t depth = 14;
  std::size_t heads = 6;
  double mlp_ratio = 3.0;
  /// Off: RGB and depth get separate backbones (the two-stream ablation).
  bool siamese = true;

  /// Token grid side after each soft split.
  std::array<std::size_t, 3> grids() const;
  std::size_t tokens() const { return grids()[2] * grids()[2]; }
  void validate() const;
};

/// (B, N, C) tokens on a g x g grid -> (B, C, g, g).
Tensor tokens_to_map(const Tensor& tokens);
/// (B, C, H, W) -> (B, H*W, C).
Tensor map_to_tokens(const Tensor& map);

/// T2T token transformer: single-head attention that changes the token width
/// (residual taken from the values), then a feed-forward block.
struct TokenTransformer {
  LayerNorm norm1;
  Linear query, key, value, proj;
  LayerNorm norm2;
  FeedForward mlp;

  static TokenTransformer create(const Scope& scope, std::size_t in_dim, std::size_t dim, double mlp_ratio,
                                 Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

/// Output of one backbone pass. With the Siamese layout rows 0..B-1 are RGB
/// and rows B..2B-1 are depth.
struct EncoderOutput {
  Tensor side1;          // (rows, (S/4)^2, c)
  Tensor side2;          // (rows, (S/8)^2, c)
  TokenSequence top;     // (rows, (S/16)^2, D), class token removed
  Tensor class_tokens;   // (rows, D)

  std::size_t rows() const { return class_tokens.size(0); }
  /// Concatenates two outputs row-wise.
  static EncoderOutput stack(const EncoderOutput& first, const EncoderOutput& second);
  /// Rows [start, start+count).
  EncoderOutput rows_slice(std::size_t start, std::size_t count) const;
};

class Encoder {
 public:
  static Encoder create(const Scope& scope, const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }
  /// One shared pass over (n, 3, S, S) images.
  EncoderOutput forward(const Tensor& images) const;

  /// Intermediate token counts of the last forward, for bookkeeping checks.
  std::array<std::size_t, 3> last_token_counts() const { return last_counts_; }

 private:
  EncoderConfig config_;
  TokenTransformer t2t1_, t2t2_;
  Linear project_;
  Tensor class_token_;  // (1, 1, D)
  Tensor position_;     // (N + 1, D)
  std::vector<TransformerLayer> blocks_;
  LayerNorm norm_;
  mutable std::array<std::size_t, 3> last_counts_{};
};

/// Concatenates RGB and 3-channel depth on the batch axis and runs one
/// backbone over both.
EncoderOutput siamese_forward(const Encoder& encoder, const Tensor& rgb, const Tensor& depth3);
/// Two-stream variant: each modality through its own backbone.
EncoderOutput two_stream_forward(const Encoder& rgb_encoder, const Encoder& depth_encoder, const Tensor& rgb,
                                 const Tensor& depth3);

/// Single logit per row from a (rows, D) class-token matrix; returns (rows).
Tensor class_logit(const Tensor& class_tokens, const Linear& head);

/// Per-token linear map to one channel, reshape to the token grid, bilinear
/// upsample to `target` and sigmoid. Returns (B, 1, target, target).
Tensor rough_saliency_head(const TokenSequence& tokens, const Linear& head, std::size_t target);

}  // namespace siatrans
