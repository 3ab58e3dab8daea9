#include "siatrans/losses.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace siatrans {

SaliencyMap::SaliencyMap(std::size_t h, std::size_t w, std::vector<double> v)
    : height(h), width(w), values(std::move(v)) {
  if (values.size() != h * w) throw DimensionError("saliency map value count does not match its size");
}

SaliencyMap SaliencyMap::from_tensor(const Tensor& maps, std::size_t b) {
  if (maps.dim() != 4 || maps.size(1) != 1 || b >= maps.size(0)) {
    throw DimensionError("expected (B,1,H,W) maps, got " + shape_str(maps.shape()));
  }
  const std::size_t h = maps.size(2), w = maps.size(3);
  const auto d = maps.data();
  return {h, w, std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(b * h * w),
                                    d.begin() + static_cast<std::ptrdiff_t>((b + 1) * h * w))};
}

Tensor SaliencyMap::to_tensor() const { return Tensor({1, 1, height, width}, values); }

void require_same_size(const SaliencyMap& a, const SaliencyMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionError("map sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

Tensor cross_entropy(const Tensor& prediction, const Tensor& target) {
  return binary_cross_entropy(prediction, target, kCrossEntropyEps);
}

const std::array<const char*, kSupervisedMaps>& LossReport::term_names() {
  static const std::array<const char*, kSupervisedMaps> names{"t_rgb", "t_depth", "t_rgbd", "side_d1",
                                                              "side_d2", "side_d3", "final"};
  return names;
}

LossReport total_loss(const SupervisedMaps& maps, const Tensor& gt, const Tensor& class_logits, const Tensor& labels,
                      const LossWeights& weights) {
  LossReport r;
  r.weights = weights;
  Tensor objective;
  for (std::size_t i = 0; i < kSupervisedMaps; ++i) {
    const auto term = cross_entropy(maps[i], gt);
    r.terms[i] = term.item();
    if (!std::isfinite(r.terms[i])) {
      throw NumericError(std::string("non-finite loss term ") + LossReport::term_names()[i]);
    }
    const auto weighted = scale(term, weights[i]);
    objective = objective.defined() ? add(objective, weighted) : weighted;
  }
  if (class_logits.defined() && labels.defined()) {
    if (class_logits.shape() != labels.shape()) {
      throw DimensionError("class logits " + shape_str(class_logits.shape()) + " vs labels " +
                           shape_str(labels.shape()));
    }
    const auto lc = cross_entropy(sigmoid(class_logits), labels);
    r.classification = lc.item();
    if (!std::isfinite(r.classification)) throw NumericError("non-finite classification loss");
    objective = add(objective, lc);
  }
  r.objective = objective;
  r.total = objective.item();
  return r;
}

double mae_between_maps(const SaliencyMap& a, const SaliencyMap& b) {
  require_same_size(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a.values[i] - b.values[i]);
  return s / static_cast<double>(a.size());
}

int quality_label(double mae) { return mae > kLabelMaeThreshold ? 0 : 1; }

std::vector<QualityRecord> produce_labels(const std::map<std::string, SaliencyMap>& depth_maps,
                                          const std::map<std::string, SaliencyMap>& rgbd_maps) {
  for (const auto& [id, _] : rgbd_maps) {
    if (!depth_maps.count(id)) throw DataError("pair '" + id + "' has an RGB-D map but no depth map");
  }
  std::vector<QualityRecord> out;
  for (const auto& [id, depth] : depth_maps) {
    const auto it = rgbd_maps.find(id);
    if (it == rgbd_maps.end()) throw DataError("pair '" + id + "' has a depth map but no RGB-D map");
    QualityRecord r;
    r.pair_id = id;
    r.mae = mae_between_maps(depth, it->second);
    r.label = quality_label(r.mae);
    out.push_back(std::move(r));
  }
  return out;
}

FusionMode quality_gate(double class_probability, double rgb_depth_mae) {
  const bool poor = class_probability < kClassBoundary;
  return poor && rgb_depth_mae > kGateMaeThreshold ? FusionMode::Self : FusionMode::Cross;
}

FusionMode quality_gate(double class_probability, const SaliencyMap& t_rgb, const SaliencyMap& t_depth) {
  return quality_gate(class_probability, mae_between_maps(t_rgb, t_depth));
}

void write_quality_records(std::ostream& os, const std::vector<QualityRecord>& records) {
  for (const auto& r : records) {
    os << r.pair_id << '\t' << std::fixed << std::setprecision(6) << r.mae << '\t' << r.label << '\n';
  }
}

std::vector<QualityRecord> read_quality_records(std::istream& is) {
  std::vector<QualityRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, mae_text, label_text, extra;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, mae_text, '\t') || !std::getline(ls, label_text, '\t') ||
        std::getline(ls, extra)) {
      throw DataError("label file line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    QualityRecord r;
    r.pair_id = id;
    try {
      std::size_t used = 0;
      r.mae = std::stod(mae_text, &used);
      if (used != mae_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError("label file line " + std::to_string(line_no) + ": bad mae '" + mae_text + "'");
    }
    if (label_text != "0" && label_text != "1") {
      throw DataError("label file line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    r.label = label_text == "1" ? 1 : 0;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace siatrans
