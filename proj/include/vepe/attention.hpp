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
#include <string>
#include <vector>

#include "vepe/layers.hpp"
#include "vepe/ops.hpp"

namespace vepe {

struct AttentionConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t levels = 3;
  std::size_t points = 4;
  std::size_t frames = 3;
  std::size_t ffn_width = 256;

  void validate() const;
  bool operator==(const AttentionConfig&) const = default;
};

struct ReferencePoint {
  double x = 0.5;
  double y = 0.5;
};

// Multi-level feature pyramid flattened level by level (finest first) into
// one [S x d_model] token matrix.
struct MultiScaleFeatureMemory {
  Tensor tokens;
  LevelLayout layout;

  std::size_t channels() const { return tokens.dim(1); }
  // [H_l x W_l x d_model] copy of one level; differentiable.
  Tensor level(std::size_t l) const;
  // Normalized centre of every token, in token order.
  std::vector<ReferencePoint> token_centers() const;
  void validate() const;

  static MultiScaleFeatureMemory from_levels(const std::vector<Tensor>& maps);
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& name,
                     std::size_t d_model, std::size_t heads, Rng& rng);

  // Projects q/k/v, runs per-head scaled dot-product attention and mixes
  // heads with the output projection. No residual.
  Tensor forward(const Tensor& query, const Tensor& key, const Tensor& value,
                 std::span<const std::uint8_t> mask = {},
                 EmptyRowPolicy policy = EmptyRowPolicy::kError) const;

  std::size_t heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;
};

// Sampling locations and softmax-normalized weights of one deformable
// attention call, exposed for diagnostics and tests.
struct DeformableTrace {
  Tensor locations;  // [Nq x M x T x L x K x 2]
  Tensor weights;    // [Nq x M x T x L x K]
};

// Multi-scale deformable attention over `frames` memories. frames == 1 is
// the single-frame operator; frames > 1 normalizes each head's weights over
// all frame, level and point samples jointly.
class DeformableAttention {
 public:
  DeformableAttention() = default;
  DeformableAttention(ParameterSet& params, const std::string& name,
                      const AttentionConfig& config, std::size_t frames,
                      Rng& rng);

  Tensor forward(const Tensor& queries, std::span<const ReferencePoint> refs,
                 std::span<const MultiScaleFeatureMemory* const> memories,
                 DeformableTrace* trace = nullptr) const;

  std::size_t heads = 1, levels = 1, points = 1, frames = 1;
  Linear value_proj;   // W'
  Linear offsets;      // query -> M*T*L*K*2 pixel offsets
  Linear weight_logits;  // query -> M*T*L*K
  Linear out_proj;     // W
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& name, std::size_t d_model,
              std::size_t width, Rng& rng);

  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

  Linear fc1, fc2;
};

Tensor msda(const DeformableAttention& attn, const Tensor& queries,
            std::span<const ReferencePoint> refs,
            const MultiScaleFeatureMemory& memory,
            DeformableTrace* trace = nullptr);
Tensor tmsda(const DeformableAttention& attn, const Tensor& queries,
             std::span<const ReferencePoint> refs,
             const std::vector<const MultiScaleFeatureMemory*>& memories,
             DeformableTrace* trace = nullptr);

// Fixed sinusoidal embedding of normalized 2-D points -> [N x width].
Tensor sine_embedding(std::span<const ReferencePoint> points, std::size_t width);

}  // namespace vepe
