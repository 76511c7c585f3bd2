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

#include "vepe/layers.hpp"

namespace vepe {

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in,
               std::size_t out, Rng& rng, Init weight_init, bool with_bias) {
  weight = params.add(name + ".weight", {in, out}, weight_init, rng);
  if (with_bias) bias = params.add(name + ".bias", {out}, Init::kZeros, rng);
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name,
                     std::size_t width, Rng& rng) {
  gamma = params.add(name + ".gamma", {width}, Init::kOnes, rng);
  beta = params.add(name + ".beta", {width}, Init::kZeros, rng);
}

Mlp::Mlp(ParameterSet& params, const std::string& name, std::size_t in,
         std::size_t hidden, std::size_t out, Rng& rng, bool zero_last)
    : fc1(params, name + ".fc1", in, hidden, rng),
      fc2(params, name + ".fc2", hidden, out, rng,
          zero_last ? Init::kZeros : Init::kXavier) {}

}  // namespace vepe
