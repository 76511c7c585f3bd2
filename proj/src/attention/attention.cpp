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

#include "vepe/attention.hpp"

#include <cmath>
#include <numbers>

namespace vepe {

void AttentionConfig::validate() const {
  if (d_model == 0 || heads == 0 || levels == 0 || points == 0 || frames == 0 ||
      ffn_width == 0) {
    throw ConfigError("attention config: all counts must be >= 1");
  }
  if (d_model % heads != 0) {
    throw ConfigError("attention config: d_model " + std::to_string(d_model) +
                      " not divisible by heads " + std::to_string(heads));
  }
}

// ------------------------------------------------------------------ memory

Tensor MultiScaleFeatureMemory::level(std::size_t l) const {
  const auto [h, w] = layout.shapes.at(l);
  const std::size_t s = layout.start(l);
  return reshape(slice_rows(tokens, s, s + h * w), {h, w, channels()});
}

std::vector<ReferencePoint> MultiScaleFeatureMemory::token_centers() const {
  std::vector<ReferencePoint> refs;
  refs.reserve(layout.tokens());
  for (const auto& [h, w] : layout.shapes) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        refs.push_back({(static_cast<double>(j) + 0.5) / static_cast<double>(w),
                        (static_cast<double>(i) + 0.5) / static_cast<double>(h)});
      }
    }
  }
  return refs;
}

void MultiScaleFeatureMemory::validate() const {
  if (layout.levels() == 0) throw ConfigError("feature memory: no levels");
  for (std::size_t l = 1; l < layout.levels(); ++l) {
    if (layout.shapes[l].first > layout.shapes[l - 1].first ||
        layout.shapes[l].second > layout.shapes[l - 1].second) {
      throw ConfigError("feature memory: level " + std::to_string(l) +
                        " is larger than level " + std::to_string(l - 1));
    }
  }
  if (tokens.rank() != 2 || tokens.dim(0) != layout.tokens()) {
    throw ShapeError("feature memory: tokens " + shape_str(tokens.shape()) +
                     " do not match layout of " +
                     std::to_string(layout.tokens()) + " tokens");
  }
}

MultiScaleFeatureMemory MultiScaleFeatureMemory::from_levels(
    const std::vector<Tensor>& maps) {
  MultiScaleFeatureMemory mem;
  std::vector<Tensor> flat;
  for (const Tensor& m : maps) {
    if (m.rank() != 3 || m.dim(2) != maps.front().dim(2)) {
      throw ShapeError("feature memory: level map " + shape_str(m.shape()) +
                       " is not [H x W x d]");
    }
    mem.layout.shapes.emplace_back(m.dim(0), m.dim(1));
    flat.push_back(reshape(m, {m.dim(0) * m.dim(1), m.dim(2)}));
  }
  mem.tokens = concat_rows(flat);
  mem.validate();
  return mem;
}

// --------------------------------------------------------------------- MHA

MultiHeadAttention::MultiHeadAttention(ParameterSet& params,
                                       const std::string& name,
                                       std::size_t d_model, std::size_t h,
                                       Rng& rng)
    : heads(h),
      q_proj(params, name + ".q", d_model, d_model, rng),
      k_proj(params, name + ".k", d_model, d_model, rng),
      v_proj(params, name + ".v", d_model, d_model, rng),
      out_proj(params, name + ".out", d_model, d_model, rng) {
  if (h == 0 || d_model % h != 0) {
    throw ConfigError("attention: d_model not divisible by heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& key,
                                   const Tensor& value,
                                   std::span<const std::uint8_t> mask,
                                   EmptyRowPolicy policy) const {
  return out_proj(scaled_dot_attention(q_proj(query), k_proj(key),
                                       v_proj(value), heads, mask, policy));
}

// -------------------------------------------------------------- deformable

DeformableAttention::DeformableAttention(ParameterSet& params,
                                         const std::string& name,
                                         const AttentionConfig& config,
                                         std::size_t t, Rng& rng)
    : heads(config.heads),
      levels(config.levels),
      points(config.points),
      frames(t) {
  config.validate();
  if (t == 0) throw ConfigError("deformable attention: frames must be >= 1");
  const std::size_t d = config.d_model;
  const std::size_t samples = heads * frames * levels * points;
  value_proj = Linear(params, name + ".value", d, d, rng);
  offsets = Linear(params, name + ".offsets", d, samples * 2, rng, Init::kZeros);
  weight_logits =
      Linear(params, name + ".weights", d, samples, rng, Init::kZeros);
  out_proj = Linear(params, name + ".out", d, d, rng);

  // Head m starts looking along direction 2*pi*m/M, point k at radius k+1.
  auto bias = offsets.bias.data_mut();
  for (std::size_t m = 0; m < heads; ++m) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) /
                         static_cast<double>(heads);
    double dx = std::cos(theta), dy = std::sin(theta);
    const double norm = std::max(std::fabs(dx), std::fabs(dy));
    dx /= norm;
    dy /= norm;
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t l = 0; l < levels; ++l) {
        for (std::size_t k = 0; k < points; ++k) {
          const std::size_t s = ((m * frames + f) * levels + l) * points + k;
          bias[2 * s] = dx * static_cast<double>(k + 1);
          bias[2 * s + 1] = dy * static_cast<double>(k + 1);
        }
      }
    }
  }
}

Tensor DeformableAttention::forward(
    const Tensor& queries, std::span<const ReferencePoint> refs,
    std::span<const MultiScaleFeatureMemory* const> memories,
    DeformableTrace* trace) const {
  if (memories.size() != frames) {
    throw ConfigError("deformable attention: expected " +
                      std::to_string(frames) + " memories, got " +
                      std::to_string(memories.size()));
  }
  const LevelLayout& layout = memories.front()->layout;
  for (const MultiScaleFeatureMemory* m : memories) {
    if (!(m->layout == layout)) {
      throw ConfigError("deformable attention: level shapes differ across frames");
    }
  }
  if (layout.levels() != levels) {
    throw ConfigError("deformable attention: memory has " +
                      std::to_string(layout.levels()) + " levels, expected " +
                      std::to_string(levels));
  }
  const std::size_t nq = queries.dim(0);
  if (refs.size() != nq) {
    throw ShapeError("deformable attention: " + std::to_string(refs.size()) +
                     " reference points for " + std::to_string(nq) + " queries");
  }
  const std::size_t d = queries.dim(1);
  const std::size_t s_tokens = layout.tokens();

  std::vector<Tensor> projected;
  projected.reserve(frames);
  for (const MultiScaleFeatureMemory* m : memories) {
    projected.push_back(value_proj(m->tokens));
  }
  const Tensor value = reshape(frames == 1 ? projected.front() : concat_rows(projected),
                               {frames, s_tokens, d});

  const std::size_t per_head = frames * levels * points;
  const std::size_t samples = heads * per_head;
  std::vector<double> scale_vec(nq * samples * 2);
  std::vector<double> shift_vec(nq * samples * 2);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t l = (s / points) % levels;
      const auto [h, w] = layout.shapes[l];
      const std::size_t i = (q * samples + s) * 2;
      scale_vec[i] = 1.0 / static_cast<double>(w);
      scale_vec[i + 1] = 1.0 / static_cast<double>(h);
      shift_vec[i] = refs[q].x;
      shift_vec[i + 1] = refs[q].y;
    }
  }
  const Tensor shift({nq * samples * 2}, std::move(shift_vec));
  const Tensor raw = offsets(queries);
  const Tensor loc =
      reshape(add(reshape(mul_const(raw, scale_vec), {nq * samples * 2}), shift),
              {nq, heads, frames, levels, points, 2});
  const Tensor weights = reshape(
      softmax(reshape(weight_logits(queries), {nq, heads, per_head}), 2),
      {nq, heads, frames, levels, points});
  if (trace) {
    trace->locations = loc;
    trace->weights = weights;
  }
  return out_proj(deformable_aggregate(value, layout, loc, weights, heads, points));
}

Tensor msda(const DeformableAttention& attn, const Tensor& queries,
            std::span<const ReferencePoint> refs,
            const MultiScaleFeatureMemory& memory, DeformableTrace* trace) {
  const MultiScaleFeatureMemory* mems[] = {&memory};
  return attn.forward(queries, refs, mems, trace);
}

Tensor tmsda(const DeformableAttention& attn, const Tensor& queries,
             std::span<const ReferencePoint> refs,
             const std::vector<const MultiScaleFeatureMemory*>& memories,
             DeformableTrace* trace) {
  return attn.forward(queries, refs, memories, trace);
}

// --------------------------------------------------------------------- FFN

FeedForward::FeedForward(ParameterSet& params, const std::string& name,
                         std::size_t d_model, std::size_t width, Rng& rng)
    : fc1(params, name + ".fc1", d_model, width, rng),
      fc2(params, name + ".fc2", width, d_model, rng) {}

// ---------------------------------------------------------------- position

Tensor sine_embedding(std::span<const ReferencePoint> points, std::size_t width) {
  if (width % 4 != 0) {
    throw ConfigError("sine embedding width must be a multiple of 4");
  }
  const std::size_t freqs = width / 4;
  Tensor out({points.size(), width});
  double* o = out.ptr_mut();
  for (std::size_t n = 0; n < points.size(); ++n) {
    const double coords[2] = {points[n].x, points[n].y};
    for (int c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < freqs; ++i) {
        const double ratio =
            freqs > 1 ? static_cast<double>(i) / static_cast<double>(freqs - 1) : 0.0;
        const double omega = std::numbers::pi * std::pow(64.0, ratio);
        const std::size_t base = n * width + c * (width / 2) + 2 * i;
        o[base] = std::sin(omega * coords[c]);
        o[base + 1] = std::cos(omega * coords[c]);
      }
    }
  }
  return out;
}

}  // namespace vepe
