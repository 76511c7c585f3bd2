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

#pragma once

#include <cstddef>
#include <string_view>

// Dense float64 inner loops. Every kernel has a scalar reference and an
// AVX2+FMA variant; the variant is picked once at startup from cpuid and can
// be pinned with VEPE_SIMD=scalar|avx2.
namespace vepe::kernels {

enum class Isa { kScalar, kAvx2 };

// C = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n.
// Row-major with leading dimensions lda/ldb/ldc.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m,
                        std::size_t n, std::size_t k, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb,
                        bool accumulate, double* c, std::size_t ldc);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
// y += alpha * x
using AxpyFn = void (*)(double alpha, const double* x, double* y,
                        std::size_t n);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
};

const KernelTable& scalar_table();
// Returns nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);
const KernelTable& active();
// Test hook. Throws std::invalid_argument if the CPU lacks the ISA.
void select(Isa isa);
std::string_view isa_name(Isa isa);

namespace scalar {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, bool accumulate, double* c, std::size_t ldc);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(VEPE_HAVE_AVX2)
namespace avx2 {
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, bool accumulate, double* c, std::size_t ldc);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, bool accumulate, double* c,
                 std::size_t ldc) {
  active().gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, accumulate, c, ldc);
}
inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

}  // namespace vepe::kernels
