#pragma once

#include <cstddef>
#include <vector>

#include "siatrans/tensor.hpp"

namespace siatrans {

/// Single-channel map at image resolution, values in [0,1]. Ground-truth maps
/// use the same type with values in {0,1}.
struct SaliencyMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  SaliencyMap(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  double& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }

  /// Row `b` of a (B,1,H,W) tensor.
  static SaliencyMap from_tensor(const Tensor& maps, std::size_t b);
  /// (1,1,H,W) tensor view of the map.
  Tensor to_tensor() const;
};

void require_same_size(const SaliencyMap& a, const SaliencyMap& b);

}  // namespace siatrans
