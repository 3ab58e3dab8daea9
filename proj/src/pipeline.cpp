#include "siatrans/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "siatrans/checkpoint.hpp"

namespace siatrans {

namespace fs = std::filesystem;

TrainHistory train(SiaTrans& model, const std::vector<PreparedPair>& data, const std::map<std::string, int>* labels,
                   const RunConfig& config, std::ostream* log) {
  if (data.size() < 2) throw DataError("training needs at least two pairs");
  const std::size_t batch = std::min(config.batch_size, data.size());
  if (batch < 2) throw UsageError("batch size must be at least 2");
  Adam adam(model.parameters(), config.adam);
  const auto schedule = config.schedule();
  Rng order_rng(config.data_seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (!config.output_dir.empty()) fs::create_directories(config.output_dir);
  TrainHistory history;
  std::size_t step = 0;
  bool done = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !done; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), order_rng.engine());
    const double lr = schedule.at(epoch);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start + 1 < order.size() && !done; start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      if (count < 2) break;
      std::vector<const PreparedPair*> rows;
      for (std::size_t i = 0; i < count; ++i) rows.push_back(&data[order[start + i]]);
      const auto b = make_batch(rows, config.classification ? labels : nullptr);

      model.parameters().zero_grad();
      Tape tape;
      LossReport report;
      {
        TapeScope scope(tape);
        const auto out = model.forward(b.rgb, b.depth3, {true, GatePolicy::Cross});
        report = total_loss(out.maps, b.gt, out.class_logits, b.labels, unit_loss_weights());
      }
      tape.backward(report.objective);
      adam.step(lr);

      StepLog s{epoch, step, lr, report.terms, report.classification, report.total};
      history.steps.push_back(s);
      epoch_sum += report.total;
      ++epoch_steps;
      ++step;
      if (config.max_steps != 0 && step >= config.max_steps) done = true;
    }
    const double mean = epoch_steps ? epoch_sum / static_cast<double>(epoch_steps) : 0.0;
    history.epoch_mean_loss.push_back(mean);
    if (log) {
      *log << "epoch " << epoch << " lr " << std::scientific << std::setprecision(3) << lr << " loss "
           << std::fixed << std::setprecision(6) << mean << "\n";
    }
    if (!config.output_dir.empty() && config.checkpoint_every != 0 && (epoch + 1) % config.checkpoint_every == 0) {
      save_checkpoint(model, (fs::path(config.output_dir) / ("epoch_" + std::to_string(epoch + 1) + ".ckpt")).string());
    }
  }
  if (!config.output_dir.empty()) save_checkpoint(model, (fs::path(config.output_dir) / "final.ckpt").string());
  return history;
}

Inference infer(const SiaTrans& model, const PreparedPair& pair, GatePolicy policy) {
  NoGradScope no_grad;
  const std::size_t S = model.config().encoder.image_size;
  const auto rgb = reshape(pair.rgb, {1, 3, S, S});
  const auto depth = reshape(pair.depth3, {1, 3, S, S});
  const auto out = model.forward(rgb, depth, {false, policy});
  Inference r;
  r.final_map = SaliencyMap::from_tensor(out.final_map(), 0);
  r.t_rgb = SaliencyMap::from_tensor(out.maps[0], 0);
  r.t_depth = SaliencyMap::from_tensor(out.maps[1], 0);
  r.record.pair_id = pair.id;
  r.record.probability = out.probabilities[0];
  r.record.gate_mae = out.gate_mae[0];
  r.record.decision = out.modes[0];
  r.record.label = out.probabilities[0] < kClassBoundary ? 0 : 1;
  if (pair.gt.size() == r.final_map.size()) r.record.mae = mae_between_maps(r.final_map, pair.gt);
  return r;
}

std::vector<SaliencyMap> predict(const SiaTrans& model, const std::vector<PreparedPair>& data, GatePolicy policy,
                                 std::size_t batch_size) {
  NoGradScope no_grad;
  std::vector<SaliencyMap> maps;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const PreparedPair*> rows;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(&data[i]);
    const auto b = make_batch(rows, nullptr);
    const auto out = model.forward(b.rgb, b.depth3, {false, policy});
    for (std::size_t i = 0; i < rows.size(); ++i) maps.push_back(SaliencyMap::from_tensor(out.final_map(), i));
  }
  return maps;
}

std::vector<QualityRecord> label_depth(const SiaTrans& baseline, const std::vector<PreparedPair>& data) {
  std::map<std::string, SaliencyMap> depth_maps, rgbd_maps;
  for (const auto& pair : data) {
    const auto r = infer(baseline, pair, GatePolicy::Cross);
    depth_maps[pair.id] = r.t_depth;
    rgbd_maps[pair.id] = r.final_map;
  }
  return produce_labels(depth_maps, rgbd_maps);
}

EvalResult evaluate_directories(const std::string& prediction_dir, const std::string& gt_dir,
                                const std::string& out_dir) {
  auto list = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".png") names.insert(e.path().filename().string());
    }
    return names;
  };
  const auto preds = list(prediction_dir);
  const auto gts = list(gt_dir);
  std::string unmatched;
  for (const auto& n : preds) {
    if (!gts.count(n)) unmatched += " " + n + "(no GT)";
  }
  for (const auto& n : gts) {
    if (!preds.count(n)) unmatched += " " + n + "(no prediction)";
  }
  if (!unmatched.empty()) throw DataError("unmatched files:" + unmatched);
  if (preds.empty()) throw DataError("no predictions found in '" + prediction_dir + "'");

  std::vector<std::string> names;
  std::vector<SaliencyMap> s, g;
  for (const auto& n : preds) {
    names.push_back(fs::path(n).stem().string());
    s.push_back(gray_to_map(read_png((fs::path(prediction_dir) / n).string())));
    auto gt = gray_to_map(read_png((fs::path(gt_dir) / n).string()));
    for (auto& v : gt.values) v = v >= 0.5 ? 1.0 : 0.0;
    g.push_back(std::move(gt));
  }
  auto result = evaluate_collection(names, s, g);
  fs::create_directories(out_dir);
  std::ofstream csv((fs::path(out_dir) / "metrics.csv").string());
  write_metrics_csv(csv, result);
  std::ofstream pr((fs::path(out_dir) / "pr_curve.txt").string());
  write_pr_curve(pr, result.mean_pr);
  if (!csv || !pr) throw DataError("cannot write evaluation files into '" + out_dir + "'");
  return result;
}

}  // namespace siatrans
