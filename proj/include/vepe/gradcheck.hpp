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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vepe/tensor.hpp"

namespace vepe {

struct GradcheckInput {
  std::size_t input = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::string op;
  double tol = 0.0;
  bool passed = false;
  // Non-empty when the check could not run (e.g. non-finite forward output).
  std::string diagnostic;
  std::vector<GradcheckInput> inputs;

  double max_rel_error() const;
  std::string summary() const;
};

using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradcheckOptions {
  double step = 1e-5;
  // Denominator floor of the relative error.
  double floor = 1e-3;
  std::uint64_t seed = 7;
};

// Compares analytic gradients of a random projection of op(inputs) against
// central differences for every entry of every input that requires grad.
GradcheckReport gradcheck(const std::string& name, const GradFn& op,
                          std::vector<Tensor> inputs, double tol,
                          const GradcheckOptions& options = {});

}  // namespace vepe
