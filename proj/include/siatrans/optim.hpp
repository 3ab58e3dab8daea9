#pragma once

#include <vector>

#include "siatrans/nn.hpp"

namespace siatrans {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of a ParameterStore.
class Adam {
 public:
  Adam(ParameterStore& store, const AdamConfig& config);

  /// Applies one update using the accumulated gradients at learning rate `lr`.
  /// Parameters without a gradient are left unchanged.
  void step(double lr);
  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Piecewise-constant schedule: `base` times `factor` for every milestone
/// epoch already reached.
struct StepSchedule {
  double base = 1e-4;
  std::vector<std::size_t> milestones{100, 150};
  double factor = 0.1;

  double at(std::size_t epoch) const;
};

}  // namespace siatrans
