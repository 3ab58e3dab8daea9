#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "siatrans/cmf.hpp"
#include "siatrans/saliency_map.hpp"

namespace siatrans {

inline constexpr double kLabelMaeThreshold = 0.020;  // offline label production
inline constexpr double kGateMaeThreshold = 0.015;   // test-time gate
inline constexpr double kClassBoundary = 0.5;
inline constexpr double kCrossEntropyEps = 1e-7;
inline constexpr std::size_t kSupervisedMaps = 7;

/// -mean[g log s + (1-g) log(1-s)] with s clamped to [eps, 1-eps].
Tensor cross_entropy(const Tensor& prediction, const Tensor& target);

/// Supervision points in order: T-RGB, T-Depth, T-RGB-D, D1/D2/D3 side maps,
/// final map.
using SupervisedMaps = std::array<Tensor, kSupervisedMaps>;
using LossWeights = std::array<double, kSupervisedMaps>;

inline LossWeights unit_loss_weights() { return {1, 1, 1, 1, 1, 1, 1}; }

struct LossReport {
  std::array<double, kSupervisedMaps> terms{};
  LossWeights weights{};
  double classification = 0.0;
  double total = 0.0;
  Tensor objective;  // differentiable scalar equal to `total`

  static const std::array<const char*, kSupervisedMaps>& term_names();
};

/// Sum of weighted saliency terms plus the classification term. `class_logits`
/// and `labels` (both (B)) may be undefined, in which case L_c = 0.
LossReport total_loss(const SupervisedMaps& maps, const Tensor& gt, const Tensor& class_logits,
                      const Tensor& labels, const LossWeights& weights);

double mae_between_maps(const SaliencyMap& a, const SaliencyMap& b);

struct QualityRecord {
  std::string pair_id;
  double mae = 0.0;  // depth map vs RGB-D map
  int label = 1;     // 1 = usable depth, 0 = poor
  double probability = std::numeric_limits<double>::quiet_NaN();
  double gate_mae = std::numeric_limits<double>::quiet_NaN();
  FusionMode decision = FusionMode::Cross;
};

/// 0 when the error is strictly above the labeling threshold.
int quality_label(double mae);

/// Labels every pair present in both collections; ordered by pair id.
/// A pair id missing from either side throws DataError.
std::vector<QualityRecord> produce_labels(const std::map<std::string, SaliencyMap>& depth_maps,
                                          const std::map<std::string, SaliencyMap>& rgbd_maps);

/// SELF exactly when the classifier calls the depth poor and the rough RGB and
/// depth maps disagree by more than the gate threshold.
FusionMode quality_gate(double class_probability, double rgb_depth_mae);
FusionMode quality_gate(double class_probability, const SaliencyMap& t_rgb, const SaliencyMap& t_depth);

/// `pair-id \t mae(6 decimals) \t label`, one line per record.
void write_quality_records(std::ostream& os, const std::vector<QualityRecord>& records);
std::vector<QualityRecord> read_quality_records(std::istream& is);

}  // namespace siatrans
