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

#include <string>
#include <vector>

#include "vepe/gradcheck.hpp"

namespace vepe {

inline constexpr double kGradTol = 1e-4;
inline constexpr double kGradTolBilinear = 1e-3;

struct GradcheckSuiteOptions {
  // Adds an operator whose backward is deliberately wrong.
  bool corrupt_fixture = false;
  std::uint64_t seed = 7;
};

// Every differentiable operation plus composed attention, backbone and
// temporal blocks, one report per entry.
std::vector<GradcheckReport> run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

// Identity forward whose backward doubles the gradient.
Tensor corrupted_identity(const Tensor& x);

}  // namespace vepe
