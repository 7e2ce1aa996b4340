// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace dpose::detail {

// Row-major dense kernels. All accumulate into C (C += ...). Summation order
// for each output element is fixed, so results are reproducible bit-for-bit.

// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c);
// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c);
// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c);

}  // namespace dpose::detail
