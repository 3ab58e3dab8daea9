#include "siatrans/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "siatrans/nn.hpp"

namespace siatrans {

namespace fs = std::filesystem;

std::vector<double> resize_bilinear(const Image& image, std::size_t side) {
  const std::size_t C = image.channels, H = image.height, W = image.width;
  if (H == 0 || W == 0) throw DataError("empty image");
  std::vector<double> out(C * side * side);
  const double sy = static_cast<double>(H) / static_cast<double>(side);
  const double sx = static_cast<double>(W) / static_cast<double>(side);
  for (std::size_t y = 0; y < side; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = (1.0 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x1, c);
        const double bottom = (1.0 - wx) * image.at(y1, x0, c) + wx * image.at(y1, x1, c);
        out[(c * side + y) * side + x] = (1.0 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

std::vector<double> resize_nearest(const Image& image, std::size_t side) {
  if (image.channels != 1) throw DataError("nearest resize expects a single-channel image");
  std::vector<double> out(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    const std::size_t sy = std::min(y * image.height / side, image.height - 1);
    for (std::size_t x = 0; x < side; ++x) {
      const std::size_t sx = std::min(x * image.width / side, image.width - 1);
      out[y * side + x] = image.at(sy, sx, 0);
    }
  }
  return out;
}

bool normalize_depth(std::vector<double>& plane) {
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(plane.begin(), plane.end(), 0.0);
    return false;
  }
  for (auto& v : plane) v = (v - mn) / (mx - mn) * 255.0 / 255.0;
  return true;
}

PreparedPair preprocess_inputs(const Image& rgb, const Image& depth, std::size_t side) {
  if (rgb.channels != 3) throw DataError("RGB image must have 3 channels");
  if (depth.channels != 1) throw DataError("depth image must be single-channel");
  PreparedPair p;
  const auto r = resize_bilinear(rgb, side);
  auto d = resize_bilinear(depth, side);
  if (!normalize_depth(d)) p.warnings.push_back("constant depth map; normalized to zeros");
  const std::size_t plane = side * side;
  std::vector<double> rgb_v(3 * plane), depth_v(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      rgb_v[c * plane + i] = (r[c * plane + i] / rgb.max_value() - kChannelMean[c]) / kChannelStd[c];
      depth_v[c * plane + i] = (d[i] - kChannelMean[c]) / kChannelStd[c];
    }
  }
  p.rgb = Tensor({3, side, side}, std::move(rgb_v));
  p.depth3 = Tensor({3, side, side}, std::move(depth_v));
  return p;
}

PreparedPair preprocess_images(const Image& rgb, const Image& depth, const Image& gt, std::size_t side) {
  auto p = preprocess_inputs(rgb, depth, side);
  if (gt.channels != 1) throw DataError("ground truth must be single-channel");
  const auto g = resize_nearest(gt, side);
  p.gt = SaliencyMap(side, side);
  for (std::size_t i = 0; i < g.size(); ++i) p.gt.values[i] = g[i] / gt.max_value() >= 0.5 ? 1.0 : 0.0;
  return p;
}

PreparedPair preprocess_pair(const std::string& rgb_path, const std::string& depth_path, const std::string& gt_path,
                             std::size_t side) {
  auto p = preprocess_images(read_png(rgb_path), read_png(depth_path), read_png(gt_path), side);
  p.id = fs::path(rgb_path).stem().string();
  return p;
}

DatasetIndex DatasetIndex::scan(const std::string& root, bool require_gt) {
  DatasetIndex idx;
  idx.root = root;
  const fs::path rgb_dir = fs::path(root) / "RGB";
  if (!fs::is_directory(rgb_dir)) throw DataError("dataset root '" + root + "' has no RGB directory");
  for (const auto& entry : fs::directory_iterator(rgb_dir)) {
    if (entry.path().extension() == ".png") idx.ids.push_back(entry.path().stem().string());
  }
  std::sort(idx.ids.begin(), idx.ids.end());
  if (idx.ids.empty()) throw DataError("dataset '" + root + "' is empty");
  std::string missing;
  for (const auto& id : idx.ids) {
    if (!fs::exists(idx.depth_path(id))) missing += " " + idx.depth_path(id);
    if (require_gt && !fs::exists(idx.gt_path(id))) missing += " " + idx.gt_path(id);
  }
  if (!missing.empty()) throw DataError("dataset '" + root + "' is missing files:" + missing);
  if (fs::exists(idx.labels_path())) {
    std::ifstream in(idx.labels_path());
    for (const auto& r : read_quality_records(in)) idx.labels[r.pair_id] = r.label;
  }
  return idx;
}

std::string DatasetIndex::rgb_path(const std::string& id) const { return (fs::path(root) / "RGB" / (id + ".png")).string(); }
std::string DatasetIndex::depth_path(const std::string& id) const {
  return (fs::path(root) / "depth" / (id + ".png")).string();
}
std::string DatasetIndex::gt_path(const std::string& id) const { return (fs::path(root) / "GT" / (id + ".png")).string(); }
std::string DatasetIndex::labels_path() const { return (fs::path(root) / "labels.tsv").string(); }

Batch make_batch(const std::vector<const PreparedPair*>& pairs, const std::map<std::string, int>* labels) {
  if (pairs.empty()) throw DataError("empty batch");
  const std::size_t S = pairs[0]->gt.height;
  Batch b;
  std::vector<double> rgb, depth, gt, lab;
  bool all_labeled = labels != nullptr;
  for (const auto* p : pairs) {
    rgb.insert(rgb.end(), p->rgb.data().begin(), p->rgb.data().end());
    depth.insert(depth.end(), p->depth3.data().begin(), p->depth3.data().end());
    gt.insert(gt.end(), p->gt.values.begin(), p->gt.values.end());
    b.ids.push_back(p->id);
    if (all_labeled) {
      const auto it = labels->find(p->id);
      if (it == labels->end()) {
        all_labeled = false;
      } else {
        lab.push_back(it->second);
      }
    }
  }
  const std::size_t B = pairs.size();
  b.rgb = Tensor({B, 3, S, S}, std::move(rgb));
  b.depth3 = Tensor({B, 3, S, S}, std::move(depth));
  b.gt = Tensor({B, 1, S, S}, std::move(gt));
  if (all_labeled) b.labels = Tensor({B}, std::move(lab));
  return b;
}

ToyPairs make_toy_pairs(std::size_t count, std::size_t side, std::uint64_t seed, bool degrade_odd) {
  Rng rng(seed);
  ToyPairs out;
  for (std::size_t n = 0; n < count; ++n) {
    ToyPair p;
    char name[32];
    std::snprintf(name, sizeof name, "toy%03zu", n);
    p.id = name;
    const double s = static_cast<double>(side);
    const double cy = rng.uniform(0.35, 0.65) * s, cx = rng.uniform(0.35, 0.65) * s;
    const double ry = rng.uniform(0.15, 0.3) * s, rx = rng.uniform(0.15, 0.3) * s;
    const std::array<double, 3> fg{rng.uniform(150, 250), rng.uniform(100, 250), rng.uniform(50, 200)};
    const std::array<double, 3> bg{rng.uniform(0, 90), rng.uniform(0, 90), rng.uniform(0, 90)};
    const bool poor_depth = degrade_odd && n % 2 == 1;
    for (Image* img : {&p.rgb, &p.depth, &p.gt}) {
      img->width = img->height = side;
      img->bit_depth = 8;
      img->channels = 1;
    }
    p.rgb.channels = 3;
    p.depth.bit_depth = 16;
    p.rgb.samples.resize(3 * side * side);
    p.depth.samples.resize(side * side);
    p.gt.samples.resize(side * side);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        const bool inside = dy * dy + dx * dx <= 1.0;
        const std::size_t i = y * side + x;
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = (inside ? fg[c] : bg[c]) + rng.uniform(-20, 20);
          p.rgb.samples[3 * i + c] = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 255L));
        }
        double depth = inside ? 1000.0 : 3000.0 + 10.0 * static_cast<double>(y);
        if (poor_depth) depth = rng.uniform(500, 4000);
        p.depth.samples[i] = static_cast<std::uint16_t>(std::lround(depth));
        p.gt.samples[i] = inside ? 255 : 0;
      }
    }
    out.labels[p.id] = poor_depth ? 0 : 1;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

void write_toy_dataset(const std::string& root, const ToyPairs& toy) {
  for (const char* sub : {"RGB", "depth", "GT"}) fs::create_directories(fs::path(root) / sub);
  std::vector<QualityRecord> records;
  for (const auto& p : toy.pairs) {
    write_png((fs::path(root) / "RGB" / (p.id + ".png")).string(), p.rgb);
    write_png((fs::path(root) / "depth" / (p.id + ".png")).string(), p.depth);
    write_png((fs::path(root) / "GT" / (p.id + ".png")).string(), p.gt);
    QualityRecord r;
    r.pair_id = p.id;
    r.label = toy.labels.at(p.id);
    records.push_back(r);
  }
  std::ofstream out((fs::path(root) / "labels.tsv").string());
  write_quality_records(out, records);
}

}  // namespace siatrans
