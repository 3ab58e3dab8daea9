#pragma once

#include <array>

#include "siatrans/nn.hpp"

namespace siatrans {

struct DecoderConfig {
  std::size_t image_size = 224;
  std::size_t width = 64;      // channels of every block
  std::size_t fused_dim = 64;  // CMF output width
  std::size_t side_dim = 64;   // T2T side-feature width
  /// Off: the final head reads D3 directly (plain sequential upsampling).
  bool adaptive_fusion = true;
};

struct DecoderOutput {
  Tensor d1, d2, d3;  // S/8, S/4, S/2
  Tensor eta;         // S/2 (equals d3 when adaptive fusion is off)
  Tensor final_map;   // (B,1,S,S) in [0,1]
  std::array<Tensor, 3> side_maps;  // from d1..d3, (B,1,S,S)
};

/// conv3x3-BN-ReLU, twice.
struct DoubleConv {
  Conv2d conv1;
  BatchNorm2d bn1;
  Conv2d conv2;
  BatchNorm2d bn2;

  static DoubleConv create(const Scope& scope, std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x, bool training) const;
};

/// sigmoid(conv1x1([max_c(alpha), mean_c(alpha)])): a (B,1,H,W) spatial map.
Tensor spatial_attention(const Tensor& alpha, const Conv2d& conv);

/// Adaptive attention fusion of the three decoder features.
struct AdaptiveFusion {
  Conv2d spatial;  // 2 -> 1, 1x1
  Conv2d theta_conv;
  BatchNorm2d theta_bn;
  Conv2d eta_conv;
  BatchNorm2d eta_bn;

  static AdaptiveFusion create(const Scope& scope, std::size_t width, Rng& rng);
  /// Upsamples d1..d3 to d3's resolution, concatenates them into alpha and
  /// returns eta = ReLU(BN(conv(nu * theta))). `nu_out` receives nu.
  Tensor operator()(const Tensor& d1, const Tensor& d2, const Tensor& d3, bool training,
                    Tensor* nu_out = nullptr) const;
};

class Decoder {
 public:
  static Decoder create(const Scope& scope, const DecoderConfig& config, Rng& rng);
  const DecoderConfig& config() const { return config_; }

  /// `fused` is (B, (S/16)^2, fused_dim); `side1`/`side2` are the RGB rows of
  /// the encoder's S/4 and S/8 token features.
  DecoderOutput operator()(const Tensor& fused, const Tensor& side1, const Tensor& side2, bool training) const;

 private:
  DecoderConfig config_;
  Conv2d side1_proj_, side2_proj_;
  std::array<DoubleConv, 3> blocks_;
  AdaptiveFusion fusion_;
  Conv2d final_head_;
  std::array<Conv2d, 3> side_heads_;
};

}  // namespace siatrans
