#include "siatrans/cmf.hpp"

namespace siatrans {

std::string_view to_string(FusionMode mode) { return mode == FusionMode::Cross ? "CROSS" : "SELF"; }

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "CROSS") return FusionMode::Cross;
  if (text == "SELF") return FusionMode::Self;
  throw DataError("unknown fusion mode '" + std::string(text) + "'");
}

Cmf Cmf::create(const Scope& scope, const CmfConfig& config, Rng& rng) {
  Cmf c;
  c.config_ = config;
  c.projection_ = Linear::create(scope.sub("projection"), config.in_dim, config.dim, rng);
  for (std::size_t i = 0; i < config.interactive_layers; ++i) {
    c.interactive_.push_back(
        InteractiveAttention::create(scope.sub("interactive" + std::to_string(i)), config.attention(), rng));
  }
  for (std::size_t i = 0; i < config.transformer_layers; ++i) {
    c.layers_.push_back(TransformerLayer::create(scope.sub("layer" + std::to_string(i)), config.attention(), rng));
  }
  return c;
}

Tensor Cmf::fuse(const Tensor& a_in, const Tensor& b_in) const {
  auto a = projection_(a_in);
  auto b = projection_(b_in);
  for (const auto& layer : interactive_) std::tie(a, b) = layer(a, b, config_.interactive);
  auto x = add(a, b);
  for (const auto& layer : layers_) x = layer(x);
  return x;
}

Tensor Cmf::operator()(const Tensor& rgb, const Tensor& depth, FusionMode mode) const {
  if (rgb.dim() != 3 || rgb.size(2) != config_.in_dim) {
    throw DimensionError("CMF expects (B,N," + std::to_string(config_.in_dim) + ") tokens, got " +
                         shape_str(rgb.shape()));
  }
  if (mode == FusionMode::Self) return fuse(rgb, rgb);
  if (!depth.defined()) throw UsageError("CMF in CROSS mode needs a depth sequence");
  if (depth.shape() != rgb.shape()) {
    throw DimensionError("CMF streams differ: " + shape_str(rgb.shape()) + " vs " + shape_str(depth.shape()));
  }
  return fuse(rgb, depth);
}

Tensor Cmf::operator()(const Tensor& rgb, const Tensor& depth, std::span<const FusionMode> modes) const {
  if (modes.size() != rgb.size(0)) throw DimensionError("one fusion mode per batch row is required");
  bool all_self = true, all_cross = true;
  for (auto m : modes) {
    all_self = all_self && m == FusionMode::Self;
    all_cross = all_cross && m == FusionMode::Cross;
  }
  if (all_self) return (*this)(rgb, depth, FusionMode::Self);
  if (all_cross) return (*this)(rgb, depth, FusionMode::Cross);
  if (!depth.defined()) throw UsageError("CMF in CROSS mode needs a depth sequence");
  std::vector<Tensor> rows;
  for (std::size_t b = 0; b < modes.size(); ++b) {
    rows.push_back(slice(modes[b] == FusionMode::Self ? rgb : depth, 0, b, 1));
  }
  return (*this)(rgb, concat(rows, 0), FusionMode::Cross);
}

}  // namespace siatrans
