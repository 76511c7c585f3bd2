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

#include <vector>

#include "vepe/attention.hpp"
#include "vepe/skeleton.hpp"

namespace vepe {

// Bound on refined keypoint logits.
inline constexpr double kMaxKeypointLogit = 30.0;

struct SpatialConfig {
  AttentionConfig attention;
  std::size_t queries = 100;
  std::size_t joints = kNumJoints;
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 3;
  std::vector<std::size_t> channels = {16, 32, 64, 64};

  void validate() const;
  // Coarsest backbone stride; image sides must be multiples of it.
  std::size_t max_stride() const { return std::size_t{1} << channels.size(); }
  bool operator==(const SpatialConfig&) const = default;
};

struct SpatialPoseSet {
  Tensor pose_queries;   // [N x d]
  Tensor keypoints;      // [N x K_j x 2], normalized
  Tensor score_logits;   // [N]
  std::vector<double> scores;
  std::vector<ReferencePoint> reference_points;
  // Per decoder layer, for deep supervision.
  std::vector<Tensor> layer_keypoints;
  std::vector<Tensor> layer_logits;

  std::size_t size() const { return scores.size(); }
};

struct EncoderLayer {
  LayerNorm norm1, norm2;
  DeformableAttention attn;
  FeedForward ffn;
};

struct DecoderLayer {
  LayerNorm norm_sa, norm_ca, norm_ffn, norm_head;
  MultiHeadAttention self_attn;
  DeformableAttention cross_attn;
  FeedForward ffn;
  Mlp keypoint_head;  // delta logits, zero-initialized output
  Linear score_head;
};

// Convolutional backbone, multi-scale deformable encoder and set-prediction
// decoder. Parameters are registered under the "spatial." prefix.
class SpatialModel {
 public:
  SpatialModel(ParameterSet& params, const SpatialConfig& config, Rng& rng);

  const SpatialConfig& config() const { return config_; }
  const Tensor& learned_queries() const { return queries_; }

  // image [H x W x 3] with values in [0, 1].
  MultiScaleFeatureMemory extract_features(const Tensor& image) const;
  MultiScaleFeatureMemory spatial_encode(const MultiScaleFeatureMemory& memory) const;
  SpatialPoseSet spatial_decode(const MultiScaleFeatureMemory& memory,
                                const Tensor& learned_queries) const;

  struct Output {
    MultiScaleFeatureMemory memory;  // encoded
    SpatialPoseSet poses;
  };
  Output forward(const Tensor& image) const;

  // Query positional embedding from current reference and keypoints.
  Tensor query_position(std::span<const ReferencePoint> refs,
                        const Tensor& keypoints) const;

  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;

 private:
  SpatialConfig config_;
  struct Block {
    Tensor w1, b1, w2, b2;
  };
  std::vector<Block> blocks_;
  std::vector<Linear> level_proj_;
  std::vector<LayerNorm> level_norm_;
  Tensor level_embed_;  // [L x d]
  Tensor queries_;      // [N x d]
  Linear ref_head_;
  Tensor template_;     // [K_j x 2] logit offsets from the reference
  Mlp pos_mlp_;
};

// Mean of each row's keypoints: keypoints [N x K x 2] -> N points.
std::vector<ReferencePoint> keypoint_centers(const Tensor& keypoints);

// [sine(ref) | keypoints - ref] as constants, [N x (width + 2 K)].
Tensor keypoint_position_input(std::span<const ReferencePoint> refs,
                               const Tensor& keypoints, std::size_t width);

}  // namespace vepe
