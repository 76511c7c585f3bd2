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
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vepe {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty until the first gradient is accumulated.
  std::vector<double> grad;
  bool requires_grad = false;
};

// Shared handle to a dense row-major float64 array. Copies alias the same
// storage; use clone() or detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> data_mut() { return impl_->data; }
  const double* ptr() const { return impl_->data.data(); }
  double* ptr_mut() { return impl_->data.data(); }
  double item() const;
  double at(std::size_t flat) const { return impl_->data.at(flat); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Allocates a zero gradient buffer on first use.
  std::vector<double>& grad_mut();
  void zero_grad() { impl_->grad.clear(); }

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Append-only log of executed differentiable operations. Each record owns a
// closure that reads its output gradient and accumulates into its inputs.
class Tape {
 public:
  using Backward = std::function<void()>;

  void record(const char* op, Backward fn);
  // Seeds d(root)/d(root) = 1 and replays every record once, newest first.
  void backward(const Tensor& root);
  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }
  std::vector<std::string> op_names() const;

 private:
  struct Record {
    const char* op;
    Backward fn;
  };
  std::vector<Record> records_;
};

// The tape of the calling thread.
Tape& tape();
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Clears the calling thread's tape on scope exit.
class TapeScope {
 public:
  TapeScope() = default;
  ~TapeScope() { tape().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

std::vector<double>& grad_of(const std::shared_ptr<TensorImpl>& impl);

}  // namespace vepe
