#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siatrans/saliency_map.hpp"

namespace siatrans {

inline constexpr std::size_t kThresholds = 256;  // t = i / 255
inline constexpr double kBeta2 = 0.3;
inline constexpr double kStructureGamma = 0.5;
inline constexpr double kEMeasureEps = 1e-8;

inline double threshold_value(std::size_t i) { return static_cast<double>(i) / 255.0; }

/// Throws DataError unless every value is exactly 0 or 1.
void require_binary(const SaliencyMap& gt);

/// A prediction counts as empty when no pixel reaches the first positive
/// threshold (1/255), i.e. it is all-black once exported to 8 bits.
bool is_empty_prediction(const SaliencyMap& s);
bool is_empty_gt(const SaliencyMap& gt);

struct PrCurve {
  std::array<double, kThresholds> precision{};
  std::array<double, kThresholds> recall{};
};

/// Precision/recall of `s >= t` at every threshold. Precision is 1 when
/// nothing is predicted; recall is 1 when the GT is empty.
PrCurve pr_curve(const SaliencyMap& s, const SaliencyMap& gt);

/// Weighted harmonic mean; 0 where the denominator vanishes.
double f_measure(double precision, double recall, double beta2 = kBeta2);

struct MaxF {
  double value = 0.0;
  std::size_t threshold = 0;
};
MaxF max_f_measure(const PrCurve& curve, double beta2 = kBeta2);

/// Per-image max-F with the degenerate-GT conventions: empty GT and empty
/// prediction is undefined (nullopt, skipped from dataset curves); empty GT
/// with a non-empty prediction scores 0.
std::optional<MaxF> image_max_f(const SaliencyMap& s, const SaliencyMap& gt);

/// Structure measure: gamma * object term + (1 - gamma) * region term.
double s_measure(const SaliencyMap& s, const SaliencyMap& gt, double gamma = kStructureGamma);

/// Enhanced-alignment score of the prediction binarized at threshold index `t`.
double e_measure_at(const SaliencyMap& s, const SaliencyMap& gt, std::size_t t);
/// Max over the 256 thresholds, with the degenerate-GT conventions.
double max_e_measure(const SaliencyMap& s, const SaliencyMap& gt);

/// Mean over images of the per-image MAE.
double dataset_mae(std::span<const SaliencyMap> predictions, std::span<const SaliencyMap> gts);

struct ImageMetrics {
  std::string name;
  double mae = 0.0;
  std::optional<MaxF> max_f;
  double s_measure = 0.0;
  double max_e = 0.0;
  PrCurve pr;
};

struct EvalResult {
  std::vector<ImageMetrics> images;
  double mae = 0.0;
  MaxF max_f;  // from the mean PR curve
  double s_measure = 0.0;
  double max_e = 0.0;
  PrCurve mean_pr;
  std::size_t f_skipped = 0;
};

EvalResult evaluate_collection(std::span<const std::string> names, std::span<const SaliencyMap> predictions,
                               std::span<const SaliencyMap> gts);

/// Per-image rows followed by a `mean` summary row.
void write_metrics_csv(std::ostream& os, const EvalResult& result);
/// `precision recall` per threshold, one line each.
void write_pr_curve(std::ostream& os, const PrCurve& curve);

}  // namespace siatrans
