#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "siatrans/image_io.hpp"
#include "siatrans/losses.hpp"

namespace siatrans {

/// Per-channel standardization constants applied to both modalities.
inline constexpr std::array<double, 3> kChannelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd{0.229, 0.224, 0.225};

/// Bilinear resampling (half-pixel centers, edge clamped) of an interleaved
/// image to `side` x `side`; output samples keep the input scale.
std::vector<double> resize_bilinear(const Image& image, std::size_t side);
/// Nearest-neighbour resampling of a single-channel image.
std::vector<double> resize_nearest(const Image& image, std::size_t side);

/// Min-max normalization to [0,1] (equivalently to [0,255] then /255).
/// Returns false and fills zeros when the plane is constant.
bool normalize_depth(std::vector<double>& plane);

struct PreparedPair {
  std::string id;
  Tensor rgb;     // (3,S,S) standardized
  Tensor depth3;  // (3,S,S) standardized, the normalized depth replicated
  SaliencyMap gt;  // S x S binary
  std::vector<std::string> warnings;
};

PreparedPair preprocess_images(const Image& rgb, const Image& depth, const Image& gt, std::size_t side);
PreparedPair preprocess_pair(const std::string& rgb_path, const std::string& depth_path, const std::string& gt_path,
                             std::size_t side);
/// Inference-time variant without a ground truth.
PreparedPair preprocess_inputs(const Image& rgb, const Image& depth, std::size_t side);

/// `root/{RGB,depth,GT}/<pair-id>.png`, labels at `root/labels.tsv`.
struct DatasetIndex {
  std::string root;
  std::vector<std::string> ids;
  std::map<std::string, int> labels;  // empty when labels.tsv is absent

  static DatasetIndex scan(const std::string& root, bool require_gt = true);
  std::string rgb_path(const std::string& id) const;
  std::string depth_path(const std::string& id) const;
  std::string gt_path(const std::string& id) const;
  std::string labels_path() const;
};

/// Stacks prepared pairs into (B,3,S,S) tensors and a (B,1,S,S) GT tensor.
struct Batch {
  Tensor rgb, depth3, gt;
  Tensor labels;  // (B), undefined when any pair lacks a label
  std::vector<std::string> ids;
};
Batch make_batch(const std::vector<const PreparedPair*>& pairs, const std::map<std::string, int>* labels);

/// Raw synthetic RGB-D pair: a bright ellipse on a noisy background with the
/// object nearer in the 16-bit depth image. With `degrade_odd` set,
/// odd-indexed pairs get an uninformative random depth image instead.
struct ToyPair {
  std::string id;
  Image rgb, depth, gt;
};
struct ToyPairs {
  std::vector<ToyPair> pairs;
  std::map<std::string, int> labels;  // 0 for degraded depth
};
ToyPairs make_toy_pairs(std::size_t count, std::size_t side, std::uint64_t seed, bool degrade_odd = false);
/// Writes the pairs in the dataset layout plus `labels.tsv`.
void write_toy_dataset(const std::string& root, const ToyPairs& toy);

}  // namespace siatrans
