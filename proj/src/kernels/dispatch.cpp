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

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vepe/kernels.hpp"

namespace vepe::kernels {
namespace {

const KernelTable kScalar{Isa::kScalar, &scalar::gemm, &scalar::dot,
                          &scalar::axpy};
#if defined(VEPE_HAVE_AVX2)
const KernelTable kAvx2{Isa::kAvx2, &avx2::gemm, &avx2::dot, &avx2::axpy};
#endif

const KernelTable* pick_default() {
  const char* env = std::getenv("VEPE_SIMD");
  const std::string want = env ? env : "";
  if (want == "scalar") return &kScalar;
#if defined(VEPE_HAVE_AVX2)
  if (cpu_supports(Isa::kAvx2)) return &kAvx2;
#endif
  return &kScalar;
}

const KernelTable*& slot() {
  static const KernelTable* table = pick_default();
  return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() {
#if defined(VEPE_HAVE_AVX2)
  return &kAvx2;
#else
  return nullptr;
#endif
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() { return *slot(); }

void select(Isa isa) {
  if (isa == Isa::kScalar) {
    slot() = &kScalar;
    return;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr || !cpu_supports(isa)) {
    throw std::invalid_argument("kernel ISA " + std::string(isa_name(isa)) +
                                " unavailable on this CPU/build");
  }
  slot() = t;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace vepe::kernels
