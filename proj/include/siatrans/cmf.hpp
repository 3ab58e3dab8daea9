#pragma once

#include <span>
#include <string_view>

#include "siatrans/attention.hpp"

namespace siatrans {

/// CROSS fuses RGB with depth; SELF feeds the RGB sequence as both streams.
enum class FusionMode { Cross, Self };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

struct CmfConfig {
  std::size_t in_dim = 384;
  std::size_t dim = 64;
  std::size_t interactive_layers = 2;
  std::size_t transformer_layers = 2;
  std::size_t heads = 1;
  double mlp_ratio = 4.0;
  /// Off: each stream attends to itself (no Key/Value exchange).
  bool interactive = true;

  AttentionConfig attention() const { return AttentionConfig::with_ratio(dim, heads, mlp_ratio); }
};

/// Cross-modality fusion: shared projection to the fused width, interactive
/// attention layers, element-wise merge of the two streams, transformer
/// layers. One parameter set serves both fusion modes.
class Cmf {
 public:
  static Cmf create(const Scope& scope, const CmfConfig& config, Rng& rng);

  const CmfConfig& config() const { return config_; }

  /// `depth` may be undefined in SELF mode; CROSS without depth throws.
  Tensor operator()(const Tensor& rgb, const Tensor& depth, FusionMode mode) const;
  /// Per-row modes: SELF rows substitute their RGB tokens for the depth stream.
  Tensor operator()(const Tensor& rgb, const Tensor& depth, std::span<const FusionMode> modes) const;

 private:
  Tensor fuse(const Tensor& a, const Tensor& b) const;

  CmfConfig config_;
  Linear projection_;
  std::vector<InteractiveAttention> interactive_;
  std::vector<TransformerLayer> layers_;
};

}  // namespace siatrans
