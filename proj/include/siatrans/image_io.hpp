#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siatrans/saliency_map.hpp"

namespace siatrans {

/// Decoded raster. Samples are stored interleaved in their native range
/// (0..255 for 8-bit, 0..65535 for 16-bit).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;  // 1 or 3
  int bit_depth = 8;         // 8 or 16
  std::vector<std::uint16_t> samples;

  double max_value() const { return bit_depth == 16 ? 65535.0 : 255.0; }
  std::uint16_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return samples[(y * width + x) * channels + c];
  }
};

/// PNG decoding; palette and alpha are stripped, gray+alpha becomes gray.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

/// 8-bit grayscale export of a [0,1] map (round to nearest, clamped).
Image map_to_gray8(const SaliencyMap& map);
void write_map_png(const std::string& path, const SaliencyMap& map);
/// Gray image to a [0,1] map.
SaliencyMap gray_to_map(const Image& image);

}  // namespace siatrans
