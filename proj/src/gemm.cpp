// SPDX-License-Identifier: Apache-2.0
#include "gemm.hpp"

#include <algorithm>
#include <vector>

namespace dpose::detail {

namespace {

constexpr std::int64_t kBlockK = 128;
constexpr std::int64_t kBlockN = 512;

}  // namespace

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c) {
  for (std::int64_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::int64_t j1 = std::min(n, j0 + kBlockN);
    for (std::int64_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::int64_t p1 = std::min(k, p0 + kBlockK);
      for (std::int64_t i = 0; i < m; ++i) {
        double* __restrict crow = c + i * n;
        const double* arow = a + i * k;
        std::int64_t p = p0;
        // Four rows of B per pass keeps the C row in registers longer.
        for (; p + 4 <= p1; p += 4) {
          const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
          const double* __restrict b0 = b + p * n;
          const double* __restrict b1 = b0 + n;
          const double* __restrict b2 = b1 + n;
          const double* __restrict b3 = b2 + n;
          for (std::int64_t j = j0; j < j1; ++j) crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; p < p1; ++p) {
          const double av = arow[p];
          const double* __restrict brow = b + p * n;
          for (std::int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c) {
  // Transpose B once so the inner loop runs contiguously.
  std::vector<double> bt(static_cast<std::size_t>(k * n));
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t p = 0; p < k; ++p) bt[static_cast<std::size_t>(p * n + j)] = b[j * k + p];
  gemm_nn(m, n, k, a, bt.data(), c);
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b, double* c) {
  std::vector<double> at(static_cast<std::size_t>(m * k));
  for (std::int64_t p = 0; p < k; ++p)
    for (std::int64_t i = 0; i < m; ++i) at[static_cast<std::size_t>(i * k + p)] = a[p * m + i];
  gemm_nn(m, n, k, at.data(), b, c);
}

}  // namespace dpose::detail
