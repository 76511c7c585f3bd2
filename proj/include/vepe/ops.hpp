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
#include <span>
#include <utility>
#include <vector>

#include "vepe/tensor.hpp"

// Differentiable operations. Each records a backward closure on the calling
// thread's tape when grad mode is on and any input requires grad.
namespace vepe {

// Structure
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Multiplies row i by factors[i]; factors are constants.
Tensor scale_rows(const Tensor& x, std::span<const double> factors);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
// Adds b [d] to every row of x [..., d].
Tensor add_bias(const Tensor& x, const Tensor& b);
Tensor mul_const(const Tensor& x, std::span<const double> c);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// logit(clamp(x, eps, 1 - eps)); gradient is zero where clamped.
Tensor inverse_sigmoid(const Tensor& x, double eps = 1e-5);
Tensor abs(const Tensor& x);
// Gradient is zero outside [lo, hi].
Tensor clamp(const Tensor& x, double lo, double hi);
// sigmoid(clamp(logit(p) + delta, -max_logit, max_logit)) with p first clamped
// to [sigmoid(-max_logit), sigmoid(max_logit)]. Entries with zero delta return
// the clamped p bit-exactly.
Tensor shift_logit(const Tensor& p, const Tensor& delta, double max_logit);
Tensor log(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
// x [..., in] * w [in x out] + b [out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Bilinear interpolation of map [H x W x C] at points [P x 2] given as
// (x = column, y = row) in pixel units; integer coordinates land on grid
// values and samples outside the grid read zeros.
Tensor bilinear_sample(const Tensor& map, const Tensor& points);

// x [H x W x Cin], w [kh*kw*Cin x Cout] in (ky, kx, cin) order, b [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t kernel, std::size_t stride, std::size_t pad);

// Spatial layout of a flattened multi-level token sequence.
struct LevelLayout {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (H, W)
  std::size_t levels() const { return shapes.size(); }
  std::size_t tokens() const;
  std::size_t start(std::size_t level) const;
  bool operator==(const LevelLayout&) const = default;
};

// Deformable aggregation shared by single- and multi-frame deformable
// attention.
//   value     [F x S x M*Dh]  per-frame projected tokens
//   locations [Nq x M x F x L x K x 2] normalized (x, y)
//   weights   [Nq x M x F x L x K]
// out[q, m*Dh + c] = sum_{f,l,k} w * sample(value[f, level l, head m],
//                                           (x*W_l - 0.5, y*H_l - 0.5))
Tensor deformable_aggregate(const Tensor& value, const LevelLayout& layout,
                            const Tensor& locations, const Tensor& weights,
                            std::size_t heads, std::size_t points);

enum class EmptyRowPolicy { kError, kZero };

// Multi-head scaled dot-product attention core (no projections).
// mask is row-major [Nq x Nk], nonzero = attendable; empty = attend all.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads,
                            std::span<const std::uint8_t> mask = {},
                            EmptyRowPolicy policy = EmptyRowPolicy::kError);

// Losses and similarity
// Mean binary cross entropy of sigmoid(logits) against targets in [0, 1].
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
// Row-wise cosine similarity of a, b [N x d] -> [N].
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b);
// Each row of x [N x d] divided by its Euclidean norm.
Tensor normalize_rows(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace vepe
