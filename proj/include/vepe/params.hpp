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
#include <string_view>
#include <vector>

#include "vepe/rng.hpp"
#include "vepe/tensor.hpp"

namespace vepe {

enum class Init { kZeros, kOnes, kXavier, kNormal002, kNormal1 };

// Named learnable tensors in registration order. Registration order is the
// checkpoint order.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor add(const std::string& name, Shape shape, Init init, Rng& rng);
  Tensor add(const std::string& name, Tensor value);

  const Tensor& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void zero_grad();
  // Freezes or unfreezes every parameter whose name starts with prefix.
  void set_trainable(std::string_view prefix, bool trainable);
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace vepe
