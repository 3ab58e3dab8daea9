#include "siatrans/metrics.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace siatrans {

namespace {

constexpr double kEps = DBL_EPSILON;

double object_score(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  double sigma = 0.0;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    sigma = std::sqrt(ss / static_cast<double>(x.size() - 1));
  }
  return 2.0 * mu / (mu * mu + 1.0 + sigma + kEps);
}

double s_object(const SaliencyMap& s, const SaliencyMap& gt) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (gt.values[i] > 0.5) {
      fg.push_back(s.values[i]);
    } else {
      bg.push_back(1.0 - s.values[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(s.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double block_ssim(const SaliencyMap& s, const SaliencyMap& gt, std::size_t y0, std::size_t y1, std::size_t x0,
                  std::size_t x1) {
  const double n = static_cast<double>((y1 - y0) * (x1 - x0));
  if (n == 0.0) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      mx += s(y, x);
      my += gt(y, x);
    }
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      const double dx = s(y, x) - mx, dy = gt(y, x) - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  const double denom = n - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4.0 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const SaliencyMap& s, const SaliencyMap& gt) {
  const std::size_t h = gt.height, w = gt.width;
  double sy = 0.0, sx = 0.0, count = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (gt(y, x) > 0.5) {
        sy += static_cast<double>(y);
        sx += static_cast<double>(x);
        count += 1.0;
      }
    }
  }
  std::size_t cx, cy;
  if (count == 0.0) {
    cx = static_cast<std::size_t>(std::nearbyint(static_cast<double>(w) / 2.0)) + 1;
    cy = static_cast<std::size_t>(std::nearbyint(static_cast<double>(h) / 2.0)) + 1;
  } else {
    cx = static_cast<std::size_t>(std::nearbyint(sx / count)) + 1;
    cy = static_cast<std::size_t>(std::nearbyint(sy / count)) + 1;
  }
  cx = std::min(cx, w);
  cy = std::min(cy, h);
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>(cy * (w - cx)) / area;
  const double w3 = static_cast<double>((h - cy) * cx) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * block_ssim(s, gt, 0, cy, 0, cx) + w2 * block_ssim(s, gt, 0, cy, cx, w) +
         w3 * block_ssim(s, gt, cy, h, 0, cx) + w4 * block_ssim(s, gt, cy, h, cx, w);
}

double gt_mean(const SaliencyMap& gt) {
  double m = 0.0;
  for (double v : gt.values) m += v;
  return m / static_cast<double>(gt.size());
}

}  // namespace

void require_binary(const SaliencyMap& gt) {
  for (double v : gt.values) {
    if (v != 0.0 && v != 1.0) throw DataError("ground truth must be binary, found value " + std::to_string(v));
  }
}

bool is_empty_prediction(const SaliencyMap& s) {
  const double t = threshold_value(1);
  return std::none_of(s.values.begin(), s.values.end(), [t](double v) { return v >= t; });
}

bool is_empty_gt(const SaliencyMap& gt) {
  return std::none_of(gt.values.begin(), gt.values.end(), [](double v) { return v > 0.5; });
}

PrCurve pr_curve(const SaliencyMap& s, const SaliencyMap& gt) {
  require_same_size(s, gt);
  require_binary(gt);
  // Histogram by the highest threshold each value reaches, then cumulate from the top.
  std::array<double, kThresholds> fg_hist{}, bg_hist{};
  double positives = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = std::clamp(s.values[i], 0.0, 1.0);
    auto bin = static_cast<std::size_t>(std::floor(v * 255.0));
    bin = std::min<std::size_t>(bin, kThresholds - 1);
    while (bin + 1 < kThresholds && v >= threshold_value(bin + 1)) ++bin;
    while (bin > 0 && v < threshold_value(bin)) --bin;
    if (gt.values[i] > 0.5) {
      fg_hist[bin] += 1.0;
      positives += 1.0;
    } else {
      bg_hist[bin] += 1.0;
    }
  }
  PrCurve c;
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = kThresholds; k-- > 0;) {
    tp += fg_hist[k];
    fp += bg_hist[k];
    c.precision[k] = tp + fp > 0.0 ? tp / (tp + fp) : 1.0;
    c.recall[k] = positives > 0.0 ? tp / positives : 1.0;
  }
  return c;
}

double f_measure(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  return denom > 0.0 ? (1.0 + beta2) * precision * recall / denom : 0.0;
}

MaxF max_f_measure(const PrCurve& curve, double beta2) {
  MaxF best;
  best.value = -1.0;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double f = f_measure(curve.precision[k], curve.recall[k], beta2);
    if (f > best.value) best = {f, k};
  }
  return best;
}

std::optional<MaxF> image_max_f(const SaliencyMap& s, const SaliencyMap& gt) {
  require_same_size(s, gt);
  require_binary(gt);
  if (is_empty_gt(gt)) {
    if (is_empty_prediction(s)) return std::nullopt;
    return MaxF{0.0, 0};
  }
  return max_f_measure(pr_curve(s, gt));
}

double s_measure(const SaliencyMap& s, const SaliencyMap& gt, double gamma) {
  require_same_size(s, gt);
  require_binary(gt);
  const double y = gt_mean(gt);
  double mean_s = 0.0;
  for (double v : s.values) mean_s += v;
  mean_s /= static_cast<double>(s.size());
  if (y == 0.0) return is_empty_prediction(s) ? 1.0 : 0.0;
  if (y == 1.0) return mean_s;
  const double q = gamma * s_object(s, gt) + (1.0 - gamma) * s_region(s, gt);
  return std::max(q, 0.0);
}

double e_measure_at(const SaliencyMap& s, const SaliencyMap& gt, std::size_t t) {
  require_same_size(s, gt);
  require_binary(gt);
  const double thr = threshold_value(t);
  const double n = static_cast<double>(s.size());
  std::vector<double> fm(s.size());
  double mfm = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    fm[i] = s.values[i] >= thr ? 1.0 : 0.0;
    mfm += fm[i];
  }
  mfm /= n;
  const double mgt = gt_mean(gt);
  if (mgt == 0.0) return mfm == 0.0 ? 1.0 : 0.0;
  if (mgt == 1.0) return mfm;
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double a = fm[i] - mfm, b = gt.values[i] - mgt;
    const double xi = 2.0 * a * b / (a * a + b * b + kEMeasureEps);
    sum += (xi + 1.0) * (xi + 1.0) / 4.0;
  }
  return sum / n;
}

double max_e_measure(const SaliencyMap& s, const SaliencyMap& gt) {
  require_same_size(s, gt);
  require_binary(gt);
  if (is_empty_gt(gt)) return is_empty_prediction(s) ? 1.0 : 0.0;
  double best = 0.0;
  for (std::size_t t = 0; t < kThresholds; ++t) best = std::max(best, e_measure_at(s, gt, t));
  return best;
}

double dataset_mae(std::span<const SaliencyMap> predictions, std::span<const SaliencyMap> gts) {
  if (predictions.size() != gts.size()) throw DimensionError("prediction and GT counts differ");
  if (predictions.empty()) throw DataError("no images to evaluate");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    require_same_size(predictions[i], gts[i]);
    double e = 0.0;
    for (std::size_t j = 0; j < gts[i].size(); ++j) e += std::fabs(predictions[i].values[j] - gts[i].values[j]);
    sum += e / static_cast<double>(gts[i].size());
  }
  return sum / static_cast<double>(predictions.size());
}

EvalResult evaluate_collection(std::span<const std::string> names, std::span<const SaliencyMap> predictions,
                               std::span<const SaliencyMap> gts) {
  if (names.size() != predictions.size() || predictions.size() != gts.size()) {
    throw DimensionError("name, prediction and GT counts differ");
  }
  if (predictions.empty()) throw DataError("no images to evaluate");
  EvalResult r;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ImageMetrics m;
    m.name = names[i];
    m.mae = dataset_mae(predictions.subspan(i, 1), gts.subspan(i, 1));
    m.max_f = image_max_f(predictions[i], gts[i]);
    m.s_measure = s_measure(predictions[i], gts[i]);
    m.max_e = max_e_measure(predictions[i], gts[i]);
    m.pr = pr_curve(predictions[i], gts[i]);
    r.mae += m.mae;
    r.s_measure += m.s_measure;
    r.max_e += m.max_e;
    if (m.max_f) {
      for (std::size_t k = 0; k < kThresholds; ++k) {
        r.mean_pr.precision[k] += m.pr.precision[k];
        r.mean_pr.recall[k] += m.pr.recall[k];
      }
      ++counted;
    } else {
      ++r.f_skipped;
    }
    r.images.push_back(std::move(m));
  }
  const double n = static_cast<double>(predictions.size());
  r.mae /= n;
  r.s_measure /= n;
  r.max_e /= n;
  if (counted > 0) {
    for (std::size_t k = 0; k < kThresholds; ++k) {
      r.mean_pr.precision[k] /= static_cast<double>(counted);
      r.mean_pr.recall[k] /= static_cast<double>(counted);
    }
    r.max_f = max_f_measure(r.mean_pr);
  }
  return r;
}

void write_metrics_csv(std::ostream& os, const EvalResult& result) {
  os << "name,mae,max_f,f_threshold,s_measure,max_e\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& m : result.images) {
    os << m.name << ',' << m.mae << ',';
    if (m.max_f) {
      os << m.max_f->value << ',' << threshold_value(m.max_f->threshold);
    } else {
      os << "nan,nan";
    }
    os << ',' << m.s_measure << ',' << m.max_e << '\n';
  }
  os << "mean," << result.mae << ',' << result.max_f.value << ',' << threshold_value(result.max_f.threshold) << ','
     << result.s_measure << ',' << result.max_e << '\n';
}

void write_pr_curve(std::ostream& os, const PrCurve& curve) {
  os << std::fixed << std::setprecision(6);
  for (std::size_t k = 0; k < kThresholds; ++k) {
    os << curve.precision[k] << ' ' << curve.recall[k] << '\n';
  }
}

}  // namespace siatrans
