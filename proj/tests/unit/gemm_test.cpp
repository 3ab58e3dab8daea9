#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gemm.hpp"

namespace siatrans {
namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& engine) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(engine);
  return v;
}

class GemmKernels : public ::testing::TestWithParam<std::array<std::size_t, 3>> {};

TEST_P(GemmKernels, MatchLoopProducts) {
  const auto [m, n, k] = GetParam();
  std::mt19937_64 engine(m * 1000003 + n * 1009 + k);
  const auto a = random_values(m * k, engine), b = random_values(k * n, engine), g = random_values(m * n, engine),
             bt = random_values(k * n, engine);
  auto c_nn = random_values(m * n, engine), c_nt = random_values(m * k, engine), c_tn = random_values(k * n, engine);
  auto e_nn = c_nn, e_nt = c_nt, e_tn = c_tn;
  gemm::nn(m, n, k, a.data(), b.data(), c_nn.data());
  gemm::nt(m, n, k, g.data(), bt.data(), c_nt.data());
  gemm::tn(m, n, k, a.data(), g.data(), c_tn.data());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) {
        e_nn[i * n + j] += a[i * k + p] * b[p * n + j];
        e_nt[i * k + p] += g[i * n + j] * bt[p * n + j];
        e_tn[p * n + j] += a[i * k + p] * g[i * n + j];
      }
    }
  }
  const double tol = 1e-12 * static_cast<double>(std::max({m, n, k}));
  for (std::size_t i = 0; i < c_nn.size(); ++i) ASSERT_NEAR(c_nn[i], e_nn[i], tol) << "nn " << i;
  for (std::size_t i = 0; i < c_nt.size(); ++i) ASSERT_NEAR(c_nt[i], e_nt[i], tol) << "nt " << i;
  for (std::size_t i = 0; i < c_tn.size(); ++i) ASSERT_NEAR(c_tn[i], e_tn[i], tol) << "tn " << i;
}

using Dims = std::array<std::size_t, 3>;

INSTANTIATE_TEST_SUITE_P(Sizes, GemmKernels,
                         ::testing::Values(Dims{1, 1, 1}, Dims{1, 40, 7}, Dims{5, 1, 9}, Dims{6, 7, 1},
                                           Dims{2, 3, 4}, Dims{3, 25, 18}, Dims{8, 64, 72}, Dims{8, 64, 216},
                                           Dims{8, 1024, 216}, Dims{64, 256, 576}, Dims{17, 33, 129}),
                         [](const auto& info) {
                           const auto& d = info.param;
                           return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
                         });

}  // namespace
}  // namespace siatrans
