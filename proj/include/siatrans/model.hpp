#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "siatrans/cmf.hpp"
#include "siatrans/decoder.hpp"
#include "siatrans/encoder.hpp"
#include "siatrans/losses.hpp"

namespace siatrans {

struct ModelConfig {
  EncoderConfig encoder;
  CmfConfig cmf;
  DecoderConfig decoder;
  std::uint64_t seed = 7;

  /// 224 input, 14-layer 384-wide backbone, 64-wide fusion and decoder.
  static ModelConfig full_scale();
  /// Small layout for CPU training and tests (S = 64).
  static ModelConfig desk();

  /// Keeps the derived widths consistent (CMF input = backbone width, decoder
  /// input = fused width, side width = T2T width, decoder size = input size).
  ModelConfig& sync();
  void validate() const;

  /// One `key=value` line per field in a fixed order.
  std::string canonical() const;
  /// FNV-1a 64 of `canonical()`.
  std::uint64_t hash() const;
  /// Inverse of `canonical()`; unknown keys or bad values throw DataError.
  static ModelConfig parse(const std::string& text);
  /// Sets one field by its canonical key.
  void set(const std::string& key, const std::string& value);
};

enum class GatePolicy { Cross, Self, Gated };

struct ForwardOptions {
  bool training = false;
  GatePolicy policy = GatePolicy::Cross;
};

struct ForwardResult {
  SupervisedMaps maps;                 // t_rgb, t_depth, t_rgbd, side_d1..d3, final; each (B,1,S,S)
  Tensor class_logits;                 // (B), from the depth rows
  std::vector<FusionMode> modes;       // per row
  std::vector<double> gate_mae;        // MAE(T-RGB, T-Depth) per row
  std::vector<double> probabilities;   // sigmoid(class logit) per row
  DecoderOutput decoder;

  const Tensor& final_map() const { return maps[kSupervisedMaps - 1]; }
};

/// The assembled network. Owns every parameter through one ParameterStore.
class SiaTrans {
 public:
  explicit SiaTrans(const ModelConfig& config);
  SiaTrans(const SiaTrans&) = delete;
  SiaTrans& operator=(const SiaTrans&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const Encoder& encoder() const { return encoder_; }
  const Encoder* depth_encoder() const { return depth_encoder_ ? &*depth_encoder_ : nullptr; }
  const Cmf& cmf() const { return cmf_; }
  const Decoder& decoder() const { return decoder_; }
  const Linear& class_head() const { return class_head_; }
  const Linear& rough_head() const { return rough_head_; }
  const Linear& fused_head() const { return fused_head_; }

  /// Backbone pass over both modalities (shared or two-stream per config).
  EncoderOutput encode(const Tensor& rgb, const Tensor& depth3) const;

  /// rgb, depth3: (B,3,S,S) standardized inputs.
  ForwardResult forward(const Tensor& rgb, const Tensor& depth3, const ForwardOptions& options = {}) const;

 private:
  ModelConfig config_;
  ParameterStore store_;
  Encoder encoder_;
  std::optional<Encoder> depth_encoder_;
  Linear class_head_, rough_head_, fused_head_;
  Cmf cmf_;
  Decoder decoder_;
};

}  // namespace siatrans
