#include "siatrans/optim.hpp"

#include <cmath>

namespace siatrans {

Adam::Adam(ParameterStore& store, const AdamConfig& config) : config_(config), params_(store.trainable()) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      w[j] -= lr * mh / (std::sqrt(vh) + config_.eps);
    }
  }
}

double StepSchedule::at(std::size_t epoch) const {
  double lr = base;
  for (auto m : milestones) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

}  // namespace siatrans
