#pragma once

#include <cstddef>

// Row-major accumulate-into kernels. Single-threaded, so summation order is
// fixed between runs.
namespace siatrans::gemm {

// C[m,n] += A[m,k] * B[k,n]
void nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// C[m,k] += G[m,n] * B[k,n]^T
void nt(std::size_t m, std::size_t n, std::size_t k, const double* g, const double* b, double* c);
// C[k,n] += A[m,k]^T * G[m,n]
void tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* g, double* c);

}  // namespace siatrans::gemm
