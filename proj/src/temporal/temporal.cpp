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

#include "vepe/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "vepe/kernels.hpp"

namespace vepe {

void TemporalConfig::validate() const {
  if (threshold < 0.0 || threshold > 1.0) {
    throw ConfigError("temporal config: threshold must lie in [0, 1]");
  }
  if (min_keep == 0) throw ConfigError("temporal config: min_keep must be >= 1");
  if (use_stpd && stpd_layers == 0) {
    throw ConfigError("temporal config: decoder enabled with zero layers");
  }
}

QuerySelection pose_query_selection(std::span<const double> scores, double threshold,
                                    std::size_t min_keep) {
  QuerySelection kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) kept.push_back(i);
  }
  if (kept.size() >= min_keep || kept.size() == scores.size()) return kept;
  QuerySelection order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(min_keep, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<QuerySelection> pose_query_selection(
    std::span<const SpatialPoseSet> pose_sets, double threshold, std::size_t min_keep) {
  std::vector<QuerySelection> out;
  out.reserve(pose_sets.size());
  for (const SpatialPoseSet& s : pose_sets) {
    out.push_back(pose_query_selection(s.scores, threshold, min_keep));
  }
  return out;
}

// ------------------------------------------------------------------ mask

std::size_t InstanceMask::link(std::size_t f, std::size_t i) const {
  const std::size_t n = ref_sizes.at(f);
  for (std::size_t j = 0; j < n; ++j) {
    if (blocks[f][i * n + j]) return j;
  }
  return n;
}

std::vector<std::uint8_t> InstanceMask::concatenated() const {
  const std::size_t total = std::accumulate(ref_sizes.begin(), ref_sizes.end(), std::size_t{0});
  std::vector<std::uint8_t> out(key_size * total, 0);
  std::size_t offset = 0;
  for (std::size_t f = 0; f < blocks.size(); ++f) {
    const std::size_t n = ref_sizes[f];
    for (std::size_t i = 0; i < key_size; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out[i * total + offset + j] = blocks[f][i * n + j];
      }
    }
    offset += n;
  }
  return out;
}

InstanceMask compute_instance_mask(const InstanceQuerySet& key,
                                   std::span<const InstanceQuerySet> refs) {
  InstanceMask mask;
  mask.key_size = key.size();
  const std::size_t d = key.size() ? key.embeddings.dim(1) : 0;
  for (const InstanceQuerySet& ref : refs) {
    const std::size_t n = ref.size();
    std::vector<double> sim(mask.key_size * n);
    std::vector<std::uint8_t> block(mask.key_size * n, 0);
    for (std::size_t i = 0; i < mask.key_size; ++i) {
      const double* a = key.embeddings.ptr() + i * d;
      std::size_t best = 0;
      for (std::size_t j = 0; j < n; ++j) {
        sim[i * n + j] = kernels::dot(a, ref.embeddings.ptr() + j * d, d);
        if (sim[i * n + j] > sim[i * n + best]) best = j;
      }
      if (n > 0) block[i * n + best] = 1;
    }
    mask.blocks.push_back(std::move(block));
    mask.similarity.push_back(std::move(sim));
    mask.ref_sizes.push_back(n);
  }
  return mask;
}

// ----------------------------------------------------------------- model

TemporalModel::TemporalModel(ParameterSet& params, const SpatialConfig& spatial,
                             const TemporalConfig& config, Rng& rng)
    : spatial_(spatial), config_(config), frames_(spatial.attention.frames) {
  spatial_.validate();
  config_.validate();
  const std::size_t d = spatial_.attention.d_model;
  const std::size_t kj = spatial_.joints;
  const std::size_t ffn = spatial_.attention.ffn_width;
  const std::size_t heads = spatial_.attention.heads;
  const AttentionConfig& ac = spatial_.attention;

  if (config_.use_icm) {
    inst_embed_ = params.add("temporal.instance.embed", {spatial_.queries, d},
                             Init::kNormal002, rng);
    inst_norm_attn_ = LayerNorm(params, "temporal.instance.norm_attn", d, rng);
    inst_attn_ = DeformableAttention(params, "temporal.instance.msda", ac, 1, rng);
    inst_norm_ffn_ = LayerNorm(params, "temporal.instance.norm_ffn", d, rng);
    inst_ffn_ = FeedForward(params, "temporal.instance.ffn", d, ffn, rng);
    inst_norm_out_ = LayerNorm(params, "temporal.instance.norm_out", d, rng);
    inst_proj_ = Linear(params, "temporal.instance.proj", d, d, rng);
  }
  if (config_.use_stpe) {
    for (std::size_t i = 0; i < config_.stpe_layers; ++i) {
      const std::string p = "temporal.stpe." + std::to_string(i);
      StpeLayer layer;
      layer.norm_sa = LayerNorm(params, p + ".norm_sa", d, rng);
      layer.self_attn = MultiHeadAttention(params, p + ".self_attn", d, heads, rng);
      layer.norm_ca = LayerNorm(params, p + ".norm_ca", d, rng);
      layer.cross_attn = MultiHeadAttention(params, p + ".cross_attn", d, heads, rng);
      layer.norm_ffn = LayerNorm(params, p + ".norm_ffn", d, rng);
      layer.ffn = FeedForward(params, p + ".ffn", d, ffn, rng);
      stpe.push_back(std::move(layer));
    }
  }
  if (config_.use_stdme) {
    for (std::size_t i = 0; i < config_.stdme_layers; ++i) {
      const std::string p = "temporal.stdme." + std::to_string(i);
      StdmeLayer layer;
      layer.norm_intra = LayerNorm(params, p + ".norm_intra", d, rng);
      layer.intra = DeformableAttention(params, p + ".msda", ac, 1, rng);
      layer.norm_temporal = LayerNorm(params, p + ".norm_temporal", d, rng);
      layer.temporal = DeformableAttention(params, p + ".tmsda", ac, frames_, rng);
      layer.norm_ffn = LayerNorm(params, p + ".norm_ffn", d, rng);
      layer.ffn = FeedForward(params, p + ".ffn", d, ffn, rng);
      stdme.push_back(std::move(layer));
    }
  }
  pos_mlp_ = Mlp(params, "temporal.query_pos", d + 2 * kj, d, d, rng);
  if (config_.use_stpd) {
    for (std::size_t i = 0; i < config_.stpd_layers; ++i) {
      const std::string p = "temporal.stpd." + std::to_string(i);
      StpdLayer layer;
      layer.norm_sa = LayerNorm(params, p + ".norm_sa", d, rng);
      layer.self_attn = MultiHeadAttention(params, p + ".self_attn", d, heads, rng);
      layer.norm_ca = LayerNorm(params, p + ".norm_ca", d, rng);
      layer.cross_attn = DeformableAttention(params, p + ".msda", ac, 1, rng);
      layer.norm_ffn = LayerNorm(params, p + ".norm_ffn", d, rng);
      layer.ffn = FeedForward(params, p + ".ffn", d, ffn, rng);
      layer.norm_head = LayerNorm(params, p + ".norm_head", d, rng);
      layer.keypoint_head = Mlp(params, p + ".keypoint_head", d, d, 2 * kj, rng, true);
      layer.score_head = Linear(params, p + ".score_head", d, 1, rng, Init::kZeros);
      stpd.push_back(std::move(layer));
    }
  } else {
    if (config_.use_stdme) {
      head_norm_attn_ = LayerNorm(params, "temporal.head.norm_attn", d, rng);
      head_attn_ = DeformableAttention(params, "temporal.head.msda", ac, 1, rng);
    }
    head_norm_ = LayerNorm(params, "temporal.head.norm", d, rng);
    head_keypoints_ = Mlp(params, "temporal.head.keypoints", d, d, 2 * kj, rng, true);
    head_score_ = Linear(params, "temporal.head.score", d, 1, rng, Init::kZeros);
  }
}

Tensor TemporalModel::query_position(std::span<const ReferencePoint> refs,
                                     const Tensor& keypoints) const {
  return pos_mlp_(keypoint_position_input(refs, keypoints, spatial_.attention.d_model));
}

InstanceQuerySet TemporalModel::instance_queries(const FrameState& frame,
                                                 const QuerySelection& selection) const {
  if (!config_.use_icm) {
    throw ConfigError("instance queries requested with the consistency mechanism disabled");
  }
  const std::size_t kj = spatial_.joints;
  const Tensor kps = reshape(
      gather_rows(reshape(frame.poses.keypoints, {frame.poses.size(), 2 * kj}), selection),
      {selection.size(), kj, 2});
  const std::vector<ReferencePoint> refs = keypoint_centers(kps);
  Tensor x = add(gather_rows(frame.poses.pose_queries, selection),
                 gather_rows(inst_embed_, selection));
  x = add(x, msda(inst_attn_, inst_norm_attn_(x), refs, frame.memory));
  x = add(x, inst_ffn_(inst_norm_ffn_(x)));
  return {normalize_rows(inst_proj_(inst_norm_out_(x)))};
}

Tensor TemporalModel::stpe_forward(const Tensor& key_queries,
                                   std::span<const Tensor> ref_queries,
                                   const InstanceMask* mask) const {
  std::vector<Tensor> nonempty;
  for (const Tensor& r : ref_queries) {
    if (r.defined() && r.dim(0) > 0) nonempty.push_back(r);
  }
  const std::size_t nk = key_queries.dim(0);
  std::vector<std::uint8_t> flat;
  std::vector<double> keep(nk, 1.0);
  if (mask != nullptr && !nonempty.empty()) {
    flat = mask->concatenated();
    const std::size_t total = flat.size() / std::max<std::size_t>(nk, 1);
    for (std::size_t i = 0; i < nk; ++i) {
      keep[i] = std::any_of(flat.begin() + i * total, flat.begin() + (i + 1) * total,
                            [](std::uint8_t v) { return v != 0; })
                    ? 1.0
                    : 0.0;
    }
  }
  const Tensor refs = nonempty.empty() ? Tensor() : concat_rows(nonempty);
  if (mask != nullptr && refs.defined() &&
      flat.size() != nk * refs.dim(0)) {
    throw ShapeError("stpe: instance mask does not match query counts");
  }

  Tensor x = key_queries;
  for (const StpeLayer& layer : stpe) {
    const Tensor h = layer.norm_sa(x);
    x = add(x, layer.self_attn.forward(h, h, h));
    if (refs.defined()) {
      const Tensor c = layer.cross_attn.forward(layer.norm_ca(x), refs, refs, flat,
                                                EmptyRowPolicy::kZero);
      x = add(x, scale_rows(c, keep));
    }
    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }
  return x;
}

MultiScaleFeatureMemory TemporalModel::stdme_forward(
    const MultiScaleFeatureMemory& key_memory,
    std::span<const MultiScaleFeatureMemory* const> ref_memories) const {
  for (const MultiScaleFeatureMemory* m : ref_memories) {
    if (!(m->layout == key_memory.layout)) {
      throw ConfigError("stdme: level shapes differ between keyframe and reference");
    }
  }
  if (ref_memories.size() + 1 != frames_ && !stdme.empty()) {
    throw ConfigError("stdme: expected " + std::to_string(frames_ - 1) +
                      " reference memories, got " + std::to_string(ref_memories.size()));
  }
  MultiScaleFeatureMemory out = key_memory;
  const std::vector<ReferencePoint> centers = key_memory.token_centers();
  for (const StdmeLayer& layer : stdme) {
    const MultiScaleFeatureMemory intra{layer.norm_intra(out.tokens), out.layout};
    out.tokens = add(out.tokens, msda(layer.intra, intra.tokens, centers, intra));

    std::vector<MultiScaleFeatureMemory> normed;
    normed.reserve(ref_memories.size() + 1);
    normed.push_back({layer.norm_temporal(out.tokens), out.layout});
    for (const MultiScaleFeatureMemory* m : ref_memories) {
      normed.push_back({layer.norm_temporal(m->tokens), m->layout});
    }
    std::vector<const MultiScaleFeatureMemory*> ptrs;
    for (const auto& m : normed) ptrs.push_back(&m);
    out.tokens = add(out.tokens, tmsda(layer.temporal, normed.front().tokens, centers, ptrs));
    out.tokens = add(out.tokens, layer.ffn(layer.norm_ffn(out.tokens)));
  }
  return out;
}

namespace {

Tensor refine(const Tensor& keypoints, const Tensor& delta) {
  const std::size_t n = keypoints.dim(0), kj = keypoints.dim(1);
  return reshape(shift_logit(reshape(keypoints, {n, 2 * kj}), delta, kMaxKeypointLogit),
                 {n, kj, 2});
}

std::vector<double> sigmoid_values(const Tensor& logits) {
  std::vector<double> out(logits.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-logits.at(i)));
  }
  return out;
}

}  // namespace

StpdStep TemporalModel::stpd_layer(std::size_t index, const Tensor& queries,
                                   const MultiScaleFeatureMemory& memory,
                                   const Tensor& keypoints, const Tensor& initial_logits) const {
  const StpdLayer& layer = stpd.at(index);
  const std::size_t n = queries.dim(0);
  const std::vector<ReferencePoint> refs = keypoint_centers(keypoints);
  const Tensor pos = query_position(refs, keypoints);

  Tensor q = queries;
  Tensor h = layer.norm_sa(q);
  const Tensor hp = add(h, pos);
  q = add(q, layer.self_attn.forward(hp, hp, h));
  h = layer.norm_ca(q);
  q = add(q, msda(layer.cross_attn, add(h, pos), refs, memory));
  q = add(q, layer.ffn(layer.norm_ffn(q)));

  const Tensor o = layer.norm_head(q);
  StpdStep step;
  step.queries = q;
  step.keypoints = refine(keypoints, layer.keypoint_head(o));
  step.logits = add(initial_logits, reshape(layer.score_head(o), {n}));
  return step;
}

TemporalPoseResult TemporalModel::stpd_forward(const Tensor& temporal_queries,
                                               const MultiScaleFeatureMemory& temporal_memory,
                                               const Tensor& initial_keypoints,
                                               const Tensor& initial_logits) const {
  TemporalPoseResult result;
  Tensor q = temporal_queries;
  Tensor kps = initial_keypoints;
  for (std::size_t i = 0; i < stpd.size(); ++i) {
    const StpdStep step = stpd_layer(i, q, temporal_memory, kps, initial_logits);
    result.layer_keypoints.push_back(step.keypoints);
    result.layer_logits.push_back(step.logits);
    q = step.queries;
    kps = step.keypoints.detach();
  }
  result.scores = sigmoid_values(result.layer_logits.back());
  return result;
}

TemporalPoseResult TemporalModel::single_step(const Tensor& queries,
                                              const MultiScaleFeatureMemory& memory,
                                              const Tensor& initial_keypoints,
                                              const Tensor& initial_logits) const {
  const std::size_t n = queries.dim(0);
  Tensor q = queries;
  if (config_.use_stdme) {
    const std::vector<ReferencePoint> refs = keypoint_centers(initial_keypoints);
    const Tensor pos = query_position(refs, initial_keypoints);
    q = add(q, msda(head_attn_, add(head_norm_attn_(q), pos), refs, memory));
  }
  const Tensor o = head_norm_(q);
  TemporalPoseResult result;
  result.layer_keypoints.push_back(refine(initial_keypoints, head_keypoints_(o)));
  result.layer_logits.push_back(add(initial_logits, reshape(head_score_(o), {n})));
  result.scores = sigmoid_values(result.layer_logits.back());
  return result;
}

TemporalOutput TemporalModel::forward(const FrameState& key,
                                      std::span<const FrameState> refs) const {
  const std::size_t kj = spatial_.joints;
  TemporalOutput out;
  out.key_selection =
      pose_query_selection(key.poses.scores, config_.threshold, config_.min_keep);
  for (const FrameState& r : refs) {
    out.ref_selections.push_back(
        pose_query_selection(r.poses.scores, config_.threshold, config_.min_keep));
  }
  const QuerySelection& sel = out.key_selection;
  const std::size_t n = sel.size();
  const Tensor kps0 = reshape(
      gather_rows(reshape(key.poses.keypoints, {key.poses.size(), 2 * kj}), sel),
      {n, kj, 2});
  const Tensor logits0 = reshape(
      gather_rows(reshape(key.poses.score_logits, {key.poses.size(), 1}), sel), {n});

  if (config_.use_icm) {
    out.key_instances = instance_queries(key, sel);
    for (std::size_t f = 0; f < refs.size(); ++f) {
      out.ref_instances.push_back(instance_queries(refs[f], out.ref_selections[f]));
    }
    out.mask = compute_instance_mask(out.key_instances, out.ref_instances);
  }

  Tensor q = gather_rows(key.poses.pose_queries, sel);
  if (config_.use_stpe) {
    std::vector<Tensor> ref_queries;
    for (std::size_t f = 0; f < refs.size(); ++f) {
      ref_queries.push_back(gather_rows(refs[f].poses.pose_queries, out.ref_selections[f]));
    }
    q = stpe_forward(q, ref_queries, out.mask ? &*out.mask : nullptr);
  }

  MultiScaleFeatureMemory memory = key.memory;
  if (config_.use_stdme) {
    std::vector<const MultiScaleFeatureMemory*> ref_memories;
    for (std::size_t f = 0; f + 1 < frames_; ++f) {
      ref_memories.push_back(f < refs.size() ? &refs[f].memory : &key.memory);
    }
    memory = stdme_forward(key.memory, ref_memories);
  }

  out.result = config_.use_stpd ? stpd_forward(q, memory, kps0, logits0)
                                : single_step(q, memory, kps0, logits0);
  return out;
}

void write_diagnostics(std::ostream& os, const TemporalOutput& out) {
  const auto old_precision = os.precision(17);
  os << "key_selection " << out.key_selection.size();
  for (std::size_t i : out.key_selection) os << ' ' << i;
  os << '\n';
  for (std::size_t f = 0; f < out.ref_selections.size(); ++f) {
    os << "ref_selection " << f << ' ' << out.ref_selections[f].size();
    for (std::size_t i : out.ref_selections[f]) os << ' ' << i;
    os << '\n';
  }
  if (out.mask) {
    const InstanceMask& m = *out.mask;
    for (std::size_t f = 0; f < m.blocks.size(); ++f) {
      const std::size_t n = m.ref_sizes[f];
      os << "similarity " << f << ' ' << m.key_size << ' ' << n << '\n';
      for (std::size_t i = 0; i < m.key_size; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          os << (j ? " " : "") << m.similarity[f][i * n + j];
        }
        os << '\n';
      }
      for (std::size_t i = 0; i < m.key_size; ++i) {
        os << "link " << f << ' ' << i << ' ' << m.link(f, i) << '\n';
      }
    }
  }
  for (std::size_t l = 0; l < out.result.layer_keypoints.size(); ++l) {
    const Tensor& k = out.result.layer_keypoints[l];
    const std::size_t n = k.dim(0), kj = k.dim(1);
    os << "layer " << l << ' ' << n << ' ' << kj << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < 2 * kj; ++j) {
        os << (j ? " " : "") << k.at(i * 2 * kj + j);
      }
      os << '\n';
    }
  }
  os << "scores " << out.result.scores.size();
  for (double s : out.result.scores) os << ' ' << s;
  os << '\n';
  os.precision(old_precision);
}

}  // namespace vepe
