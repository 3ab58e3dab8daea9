#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "siatrans/dataset.hpp"
#include "siatrans/metrics.hpp"
#include "siatrans/model.hpp"
#include "siatrans/optim.hpp"

namespace siatrans {

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  std::size_t batch_size = 16;
  std::size_t epochs = 200;
  AdamConfig adam;
  std::vector<std::size_t> milestones{100, 150};
  double decay = 0.1;
  /// Stops after this many optimizer steps when nonzero.
  std::size_t max_steps = 0;
  /// Writes `epoch_<n>.ckpt` every k epochs when nonzero, plus `final.ckpt`.
  std::size_t checkpoint_every = 0;
  std::string output_dir;
  bool classification = true;
  bool shuffle = true;
  std::uint64_t data_seed = 11;

  StepSchedule schedule() const { return {adam.lr, milestones, decay}; }
};

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  std::array<double, kSupervisedMaps> terms{};
  double classification = 0.0;
  double total = 0.0;
};

struct TrainHistory {
  std::vector<StepLog> steps;
  std::vector<double> epoch_mean_loss;
};

/// Mini-batch Adam on the total objective. Batches are drawn from a seeded
/// shuffle; a trailing batch of one pair is dropped because batch
/// normalization needs two rows. Non-finite losses throw NumericError.
TrainHistory train(SiaTrans& model, const std::vector<PreparedPair>& data, const std::map<std::string, int>* labels,
                   const RunConfig& config, std::ostream* log = nullptr);

struct Inference {
  SaliencyMap final_map;
  SaliencyMap t_rgb, t_depth;
  QualityRecord record;
};

/// Eval-mode forward of one pair under `policy`.
Inference infer(const SiaTrans& model, const PreparedPair& pair, GatePolicy policy = GatePolicy::Gated);
/// Final maps of every pair, eval mode, batched.
std::vector<SaliencyMap> predict(const SiaTrans& model, const std::vector<PreparedPair>& data,
                                 GatePolicy policy = GatePolicy::Cross, std::size_t batch_size = 8);

/// Runs the baseline model on every pair and labels each by the MAE between
/// its depth-stream rough map and its fused RGB-D final map.
std::vector<QualityRecord> label_depth(const SiaTrans& baseline, const std::vector<PreparedPair>& data);

/// Pairs `*.png` predictions with ground truth by filename, evaluates, and
/// writes `metrics.csv` and `pr_curve.txt` into `out_dir`. Unmatched names
/// throw DataError listing every one of them.
EvalResult evaluate_directories(const std::string& prediction_dir, const std::string& gt_dir,
                                const std::string& out_dir);

}  // namespace siatrans
