/* Copyright (c) 2026 VEPE Authors. All Rights Reserved.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Built with -mavx2 -mfma; only reached through the dispatch table after a
// cpuid check.
#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "vepe/kernels.hpp"

namespace vepe::kernels::avx2 {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 8;

// op(B) (k x n) into column panels of kNr, zero padded: panel j holds
// k rows of kNr values.
void pack_b(bool trans_b, std::size_t n, std::size_t k, const double* b,
            std::size_t ldb, double* out) {
  const std::size_t panels = (n + kNr - 1) / kNr;
  for (std::size_t jp = 0; jp < panels; ++jp) {
    const std::size_t j0 = jp * kNr;
    const std::size_t nj = std::min(kNr, n - j0);
    double* dst = out + jp * k * kNr;
    for (std::size_t p = 0; p < k; ++p) {
      double* row = dst + p * kNr;
      std::size_t j = 0;
      if (trans_b) {
        for (; j < nj; ++j) row[j] = b[(j0 + j) * ldb + p];
      } else {
        const double* src = b + p * ldb + j0;
        for (; j < nj; ++j) row[j] = src[j];
      }
      for (; j < kNr; ++j) row[j] = 0.0;
    }
  }
}

void pack_a(bool trans_a, std::size_t i0, std::size_t mi, std::size_t k,
            const double* a, std::size_t lda, double* out) {
  for (std::size_t p = 0; p < k; ++p) {
    double* dst = out + p * kMr;
    std::size_t i = 0;
    for (; i < mi; ++i) {
      dst[i] = trans_a ? a[p * lda + i0 + i] : a[(i0 + i) * lda + p];
    }
    for (; i < kMr; ++i) dst[i] = 0.0;
  }
}

// 4x8 register block: 8 ymm accumulators.
inline void micro_kernel(std::size_t k, const double* ap, const double* bp,
                         double* c, std::size_t ldc, std::size_t mi,
                         std::size_t nj, bool accumulate) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp + p * kNr);
    const __m256d b1 = _mm256_loadu_pd(bp + p * kNr + 4);
    const double* a = ap + p * kMr;
    __m256d av = _mm256_broadcast_sd(a + 0);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  if (mi == kMr && nj == kNr) {
    const __m256d acc[kMr][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}};
    for (std::size_t i = 0; i < kMr; ++i) {
      double* crow = c + i * ldc;
      if (accumulate) {
        _mm256_storeu_pd(crow, _mm256_add_pd(_mm256_loadu_pd(crow), acc[i][0]));
        _mm256_storeu_pd(crow + 4,
                         _mm256_add_pd(_mm256_loadu_pd(crow + 4), acc[i][1]));
      } else {
        _mm256_storeu_pd(crow, acc[i][0]);
        _mm256_storeu_pd(crow + 4, acc[i][1]);
      }
    }
    return;
  }
  alignas(32) double tile[kMr * kNr];
  _mm256_store_pd(tile + 0, c00);
  _mm256_store_pd(tile + 4, c01);
  _mm256_store_pd(tile + 8, c10);
  _mm256_store_pd(tile + 12, c11);
  _mm256_store_pd(tile + 16, c20);
  _mm256_store_pd(tile + 20, c21);
  _mm256_store_pd(tile + 24, c30);
  _mm256_store_pd(tile + 28, c31);
  for (std::size_t i = 0; i < mi; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t j = 0; j < nj; ++j) {
      crow[j] = accumulate ? crow[j] + tile[i * kNr + j] : tile[i * kNr + j];
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, bool accumulate, double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
    }
    return;
  }
  const std::size_t panels = (n + kNr - 1) / kNr;
  thread_local std::vector<double> bpack;
  thread_local std::vector<double> apack;
  bpack.resize(panels * k * kNr);
  apack.resize(k * kMr);
  pack_b(trans_b, n, k, b, ldb, bpack.data());
  for (std::size_t i0 = 0; i0 < m; i0 += kMr) {
    const std::size_t mi = std::min(kMr, m - i0);
    pack_a(trans_a, i0, mi, k, a, lda, apack.data());
    for (std::size_t jp = 0; jp < panels; ++jp) {
      const std::size_t j0 = jp * kNr;
      micro_kernel(k, apack.data(), bpack.data() + jp * k * kNr,
                   c + i0 * ldc + j0, ldc, mi, std::min(kNr, n - j0),
                   accumulate);
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                         _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(s0, s1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace vepe::kernels::avx2
