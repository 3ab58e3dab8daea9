#include "gemm.hpp"

// Packed GEMM at every size, so results do not depend on buffer alignment.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>

namespace siatrans::gemm {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;

Eigen::Index i(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Products with a single output row or column, in a fixed order.
void loop(std::size_t rows, std::size_t cols, std::size_t depth, const double* a, std::size_t a_row,
          std::size_t a_depth, const double* b, std::size_t b_depth, std::size_t b_col, double* c) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < cols; ++q) {
      double s = 0.0;
      for (std::size_t p = 0; p < depth; ++p) s += a[r * a_row + p * a_depth] * b[p * b_depth + q * b_col];
      c[r * cols + q] += s;
    }
  }
}

}  // namespace

void nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  if (m == 1 || n == 1) return loop(m, n, k, a, k, 1, b, n, 1, c);
  MMap(c, i(m), i(n)).noalias() += CMap(a, i(m), i(k)) * CMap(b, i(k), i(n));
}

void nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  if (m == 1 || k == 1) return loop(m, k, n, g, n, 1, b, 1, n, c);
  MMap(c, i(m), i(k)).noalias() += CMap(g, i(m), i(n)) * CMap(b, i(k), i(n)).transpose();
}

void tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c) {
  if (m == 0 || n == 0 || k == 0) return;
  if (k == 1 || n == 1) return loop(k, n, m, a, 1, k, g, n, 1, c);
  MMap(c, i(k), i(n)).noalias() += CMap(a, i(m), i(k)).transpose() * CMap(g, i(m), i(n));
}

}  // namespace siatrans::gemm
