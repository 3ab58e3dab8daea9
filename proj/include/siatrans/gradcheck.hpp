#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "siatrans/model.hpp"

namespace siatrans {

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kEndToEndGradTolerance = 1e-3;

struct GradReport {
  double max_rel_err = 0.0;
  std::size_t probes = 0;
};

/// Central finite differences against the tape gradient. A non-scalar output
/// Y is contracted as sum(w * Y) with fixed weights in [0.5, 1.5]; the numeric
/// derivative differences Y elementwise before contracting, in long double.
/// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// `probes_per_input` == 0 checks every element.
GradReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn, std::vector<Tensor> inputs,
                     std::size_t probes_per_input = 0, double h = 1e-5, double floor = 1e-6,
                     std::uint64_t seed = 5);

struct GradCase {
  std::string name;
  GradReport report;
  double tolerance = kOpGradTolerance;

  bool passed() const { return report.probes > 0 && report.max_rel_err < tolerance; }
};

/// One case per differentiable primitive and per composite layer.
std::vector<GradCase> op_gradient_suite(std::uint64_t seed = 1);

/// Training-mode forward of a freshly initialized model on two synthetic
/// pairs: every supervised map, the class logits and the total objective,
/// probed at one element of each of `probes` parameter tensors spread across
/// the backbone, fusion module and decoder.
GradCase end_to_end_gradcheck(const ModelConfig& config, std::size_t probes = 5, std::uint64_t seed = 1);

}  // namespace siatrans
