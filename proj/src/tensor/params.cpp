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

#include "vepe/params.hpp"

#include <cmath>

namespace vepe {

Tensor ParameterSet::add(const std::string& name, Shape shape, Init init,
                         Rng& rng) {
  Tensor t(shape);
  auto v = t.data_mut();
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(v.begin(), v.end(), 1.0);
      break;
    case Init::kXavier: {
      const double fan_in = shape.size() >= 2 ? static_cast<double>(shape[0]) : 1.0;
      const double fan_out = static_cast<double>(shape.back());
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& x : v) x = rng.uniform(-a, a);
      break;
    }
    case Init::kNormal002:
      for (double& x : v) x = 0.02 * rng.normal();
      break;
    case Init::kNormal1:
      for (double& x : v) x = rng.normal();
      break;
  }
  return add(name, t);
}

Tensor ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter " + name);
  value.set_requires_grad(true);
  entries_.push_back({name, value, true});
  return value;
}

const Tensor& ParameterSet::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ConfigError("unknown parameter " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterSet::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& e : entries_) {
    if (e.name.starts_with(prefix)) {
      e.trainable = trainable;
      e.tensor.set_requires_grad(trainable);
    }
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

}  // namespace vepe
