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

#include <iosfwd>
#include <optional>
#include <vector>

#include "vepe/spatial.hpp"

namespace vepe {

struct TemporalConfig {
  std::size_t stpe_layers = 2;
  std::size_t stdme_layers = 2;
  std::size_t stpd_layers = 3;
  double threshold = 0.3;
  std::size_t min_keep = 5;
  bool use_stpe = true;
  bool use_icm = true;  // instance queries, instance mask, consistency loss
  bool use_stdme = true;
  bool use_stpd = true;

  void validate() const;
  bool operator==(const TemporalConfig&) const = default;
};

// Kept query indices, ascending.
using QuerySelection = std::vector<std::size_t>;

QuerySelection pose_query_selection(std::span<const double> scores, double threshold,
                                    std::size_t min_keep);
std::vector<QuerySelection> pose_query_selection(
    std::span<const SpatialPoseSet> pose_sets, double threshold, std::size_t min_keep);

// Unit-normalized identity embeddings, one row per kept pose query.
struct InstanceQuerySet {
  Tensor embeddings;  // [N x d]
  std::size_t size() const { return embeddings.defined() ? embeddings.dim(0) : 0; }
};

struct InstanceMask {
  // Per reference frame, row-major [N_key x N_ref], 1 = attendable.
  std::vector<std::vector<std::uint8_t>> blocks;
  std::vector<std::vector<double>> similarity;
  std::vector<std::size_t> ref_sizes;
  std::size_t key_size = 0;

  // Argmax reference index of key row i in frame f.
  std::size_t link(std::size_t f, std::size_t i) const;
  // Per-frame blocks laid side by side: [N_key x sum N_ref].
  std::vector<std::uint8_t> concatenated() const;
};

InstanceMask compute_instance_mask(const InstanceQuerySet& key,
                                   std::span<const InstanceQuerySet> refs);

struct TemporalPoseResult {
  std::vector<Tensor> layer_keypoints;  // each [N x K_j x 2]
  std::vector<Tensor> layer_logits;     // each [N]
  std::vector<double> scores;
};

// Cached spatial-stage output for one frame.
struct FrameState {
  MultiScaleFeatureMemory memory;
  SpatialPoseSet poses;
};

struct TemporalOutput {
  QuerySelection key_selection;
  std::vector<QuerySelection> ref_selections;
  TemporalPoseResult result;
  InstanceQuerySet key_instances;
  std::vector<InstanceQuerySet> ref_instances;
  std::optional<InstanceMask> mask;
};

struct StpeLayer {
  LayerNorm norm_sa, norm_ca, norm_ffn;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
};

struct StdmeLayer {
  LayerNorm norm_intra, norm_temporal, norm_ffn;
  DeformableAttention intra, temporal;
  FeedForward ffn;
};

struct StpdLayer {
  LayerNorm norm_sa, norm_ca, norm_ffn, norm_head;
  MultiHeadAttention self_attn;
  DeformableAttention cross_attn;
  FeedForward ffn;
  Mlp keypoint_head;  // delta logits, zero-initialized output
  Linear score_head;  // added to the spatial logit, zero-initialized
};

struct StpdStep {
  Tensor queries, keypoints, logits;
};

// Parameters are registered under the "temporal." prefix; only the enabled
// components are created.
class TemporalModel {
 public:
  TemporalModel(ParameterSet& params, const SpatialConfig& spatial,
                const TemporalConfig& config, Rng& rng);

  const TemporalConfig& config() const { return config_; }
  TemporalConfig& mutable_config() { return config_; }

  InstanceQuerySet instance_queries(const FrameState& frame,
                                    const QuerySelection& selection) const;

  // mask == nullptr attends to every reference query.
  Tensor stpe_forward(const Tensor& key_queries, std::span<const Tensor> ref_queries,
                      const InstanceMask* mask) const;
  MultiScaleFeatureMemory stdme_forward(
      const MultiScaleFeatureMemory& key_memory,
      std::span<const MultiScaleFeatureMemory* const> ref_memories) const;
  // One decoder layer; keypoints are the layer input.
  StpdStep stpd_layer(std::size_t index, const Tensor& queries,
                      const MultiScaleFeatureMemory& memory, const Tensor& keypoints,
                      const Tensor& initial_logits) const;
  // Keypoints are detached between layers.
  TemporalPoseResult stpd_forward(const Tensor& temporal_queries,
                                  const MultiScaleFeatureMemory& temporal_memory,
                                  const Tensor& initial_keypoints,
                                  const Tensor& initial_logits) const;

  // refs may be empty; missing memories for the multi-frame sampler are
  // filled with the keyframe.
  TemporalOutput forward(const FrameState& key, std::span<const FrameState> refs) const;

  std::vector<StpeLayer> stpe;
  std::vector<StdmeLayer> stdme;
  std::vector<StpdLayer> stpd;

 private:
  Tensor query_position(std::span<const ReferencePoint> refs,
                        const Tensor& keypoints) const;
  TemporalPoseResult single_step(const Tensor& queries,
                                 const MultiScaleFeatureMemory& memory,
                                 const Tensor& initial_keypoints,
                                 const Tensor& initial_logits) const;

  SpatialConfig spatial_;
  TemporalConfig config_;
  std::size_t frames_;
  Tensor inst_embed_;  // [N x d]
  LayerNorm inst_norm_attn_, inst_norm_ffn_, inst_norm_out_;
  DeformableAttention inst_attn_;
  FeedForward inst_ffn_;
  Linear inst_proj_;
  Mlp pos_mlp_;
  // Used when the cascaded decoder is disabled.
  LayerNorm head_norm_attn_, head_norm_;
  DeformableAttention head_attn_;
  Mlp head_keypoints_;
  Linear head_score_;
};

// Similarity matrices and per-layer keypoints as line-oriented text.
void write_diagnostics(std::ostream& os, const TemporalOutput& out);

}  // namespace vepe
