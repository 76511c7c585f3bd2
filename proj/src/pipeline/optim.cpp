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

#include <cmath>

#include "vepe/pipeline.hpp"

namespace vepe {

AdamW::AdamW(ParameterSet& params, const OptimizerConfig& config)
    : params_(params), config_(config) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

void AdamW::step(double grad_scale) {
  auto& entries = params_.entries();
  if (entries.size() != m_.size()) throw ConfigError("AdamW: parameter set changed size");
  double sq = 0.0;
  for (const auto& e : entries) {
    if (!e.trainable || !e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) sq += g * g;
  }
  last_norm_ = std::sqrt(sq) * grad_scale;
  double s = grad_scale;
  if (config_.grad_clip > 0.0 && last_norm_ > config_.grad_clip) {
    s *= config_.grad_clip / last_norm_;
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable || !e.tensor.has_grad()) continue;
    std::span<double> p = e.tensor.data_mut();
    std::span<const double> g = e.tensor.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k] * s;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
      p[k] -= config_.lr * config_.weight_decay * p[k];
      p[k] -= config_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config_.eps);
    }
  }
  params_.zero_grad();
}

}  // namespace vepe
