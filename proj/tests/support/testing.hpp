#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "siatrans/gradcheck.hpp"
#include "siatrans/nn.hpp"
#include "siatrans/ops.hpp"

namespace siatrans::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::equal(a.data().begin(), a.data().end(), b.data().begin(),
                    [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

/// Contracts `y` with fixed pseudo-random weights so every output element
/// reaches the scalar loss with a distinct coefficient.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, random_tensor(y.shape(), rng, 0.5, 1.5)));
}

using siatrans::GradReport;
using siatrans::gradcheck;

}  // namespace siatrans::testing
