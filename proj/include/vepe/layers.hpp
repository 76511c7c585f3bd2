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

#include "vepe/ops.hpp"
#include "vepe/params.hpp"

namespace vepe {

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng, Init weight_init = Init::kXavier,
         bool bias = true);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  Tensor weight;
  Tensor bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t width,
            Rng& rng);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  Tensor gamma;
  Tensor beta;
};

// Two-layer perceptron with a GELU between.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, std::size_t in,
      std::size_t hidden, std::size_t out, Rng& rng, bool zero_last = false);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

  Linear fc1;
  Linear fc2;
};

}  // namespace vepe
