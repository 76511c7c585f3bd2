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

#include "vepe/spatial.hpp"

#include <cmath>

namespace vepe {

void SpatialConfig::validate() const {
  attention.validate();
  if (queries == 0) throw ConfigError("spatial config: queries must be >= 1");
  if (joints == 0) throw ConfigError("spatial config: joints must be >= 1");
  if (channels.size() != attention.levels + 1) {
    throw ConfigError("spatial config: " + std::to_string(channels.size()) +
                      " backbone blocks cannot feed " +
                      std::to_string(attention.levels) + " levels");
  }
  if (attention.d_model % 4 != 0) {
    throw ConfigError("spatial config: d_model must be a multiple of 4");
  }
}

std::vector<ReferencePoint> keypoint_centers(const Tensor& keypoints) {
  const std::size_t n = keypoints.dim(0);
  const std::size_t k = keypoints.dim(1);
  std::vector<ReferencePoint> refs(n);
  const double* p = keypoints.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      sx += p[(i * k + j) * 2];
      sy += p[(i * k + j) * 2 + 1];
    }
    refs[i] = {sx / static_cast<double>(k), sy / static_cast<double>(k)};
  }
  return refs;
}

SpatialModel::SpatialModel(ParameterSet& params, const SpatialConfig& config,
                           Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.attention.d_model;
  const std::size_t kj = config_.joints;
  AttentionConfig single = config_.attention;
  single.frames = 1;

  std::size_t cin = 3;
  for (std::size_t b = 0; b < config_.channels.size(); ++b) {
    const std::size_t c = config_.channels[b];
    const std::string p = "spatial.backbone." + std::to_string(b);
    Block blk;
    blk.w1 = params.add(p + ".conv1.weight", {9 * cin, c}, Init::kXavier, rng);
    blk.b1 = params.add(p + ".conv1.bias", {c}, Init::kZeros, rng);
    blk.w2 = params.add(p + ".conv2.weight", {9 * c, c}, Init::kXavier, rng);
    blk.b2 = params.add(p + ".conv2.bias", {c}, Init::kZeros, rng);
    blocks_.push_back(blk);
    cin = c;
  }
  for (std::size_t l = 0; l < config_.attention.levels; ++l) {
    const std::string p = "spatial.input_proj." + std::to_string(l);
    level_proj_.emplace_back(params, p, config_.channels[l + 1], d, rng);
    level_norm_.emplace_back(params, p + ".norm", d, rng);
  }
  level_embed_ = params.add("spatial.level_embed", {config_.attention.levels, d},
                            Init::kNormal002, rng);

  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    const std::string p = "spatial.encoder." + std::to_string(i);
    EncoderLayer layer;
    layer.norm1 = LayerNorm(params, p + ".norm1", d, rng);
    layer.attn = DeformableAttention(params, p + ".msda", single, 1, rng);
    layer.norm2 = LayerNorm(params, p + ".norm2", d, rng);
    layer.ffn = FeedForward(params, p + ".ffn", d, config_.attention.ffn_width, rng);
    encoder.push_back(std::move(layer));
  }

  queries_ = params.add("spatial.queries", {config_.queries, d}, Init::kNormal1, rng);
  ref_head_ = Linear(params, "spatial.ref_head", d, 2, rng);
  std::vector<double> tmpl(kj * 2, 0.0);
  for (std::size_t j = 0; j < kj && j < kNumJoints; ++j) {
    // Logit-space offsets for a figure of height 0.3 around the reference.
    tmpl[2 * j] = 4.0 * 0.3 * kCanonicalPose[j].first;
    tmpl[2 * j + 1] = 4.0 * 0.3 * kCanonicalPose[j].second;
  }
  template_ = params.add("spatial.keypoint_template", Tensor({kj, 2}, tmpl));
  pos_mlp_ = Mlp(params, "spatial.query_pos", d + 2 * kj, d, d, rng);

  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    const std::string p = "spatial.decoder." + std::to_string(i);
    DecoderLayer layer;
    layer.norm_sa = LayerNorm(params, p + ".norm_sa", d, rng);
    layer.self_attn =
        MultiHeadAttention(params, p + ".self_attn", d, config_.attention.heads, rng);
    layer.norm_ca = LayerNorm(params, p + ".norm_ca", d, rng);
    layer.cross_attn = DeformableAttention(params, p + ".msda", single, 1, rng);
    layer.norm_ffn = LayerNorm(params, p + ".norm_ffn", d, rng);
    layer.ffn = FeedForward(params, p + ".ffn", d, config_.attention.ffn_width, rng);
    layer.norm_head = LayerNorm(params, p + ".norm_head", d, rng);
    layer.keypoint_head = Mlp(params, p + ".keypoint_head", d, d, 2 * kj, rng, true);
    layer.score_head = Linear(params, p + ".score_head", d, 1, rng);
    decoder.push_back(std::move(layer));
  }
}

MultiScaleFeatureMemory SpatialModel::extract_features(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("extract_features: expected [H x W x 3], got " +
                     shape_str(image.shape()));
  }
  const std::size_t stride = config_.max_stride();
  if (image.dim(0) % stride != 0 || image.dim(1) % stride != 0) {
    throw ConfigError("extract_features: image " + std::to_string(image.dim(0)) +
                      "x" + std::to_string(image.dim(1)) +
                      " is not a multiple of stride " + std::to_string(stride));
  }
  const std::size_t d = config_.attention.d_model;
  Tensor x = add_scalar(image, -0.5);
  std::vector<Tensor> maps;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    x = gelu(conv2d(x, blk.w1, blk.b1, 3, 2, 1));
    x = gelu(conv2d(x, blk.w2, blk.b2, 3, 1, 1));
    if (b == 0) continue;
    const std::size_t l = b - 1;
    const std::size_t h = x.dim(0), w = x.dim(1);
    Tensor t = level_norm_[l](level_proj_[l](reshape(x, {h * w, x.dim(2)})));
    MultiScaleFeatureMemory single;
    single.layout.shapes = {{h, w}};
    single.tokens = t;
    const std::vector<ReferencePoint> centers = single.token_centers();
    t = add(t, sine_embedding(centers, d));
    t = add_bias(t, reshape(slice_rows(level_embed_, l, l + 1), {d}));
    maps.push_back(reshape(t, {h, w, d}));
  }
  return MultiScaleFeatureMemory::from_levels(maps);
}

MultiScaleFeatureMemory SpatialModel::spatial_encode(
    const MultiScaleFeatureMemory& memory) const {
  MultiScaleFeatureMemory out = memory;
  if (encoder.empty()) return out;
  const std::vector<ReferencePoint> centers = memory.token_centers();
  for (const EncoderLayer& layer : encoder) {
    MultiScaleFeatureMemory normed{layer.norm1(out.tokens), out.layout};
    out.tokens = add(out.tokens, msda(layer.attn, normed.tokens, centers, normed));
    out.tokens = add(out.tokens, layer.ffn(layer.norm2(out.tokens)));
  }
  return out;
}

Tensor keypoint_position_input(std::span<const ReferencePoint> refs,
                               const Tensor& keypoints, std::size_t width) {
  const std::size_t n = refs.size();
  const std::size_t kj = keypoints.dim(1);
  Tensor rel({n, 2 * kj});
  double* r = rel.ptr_mut();
  const double* k = keypoints.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kj; ++j) {
      r[i * 2 * kj + 2 * j] = k[(i * kj + j) * 2] - refs[i].x;
      r[i * 2 * kj + 2 * j + 1] = k[(i * kj + j) * 2 + 1] - refs[i].y;
    }
  }
  return concat_cols({sine_embedding(refs, width), rel});
}

Tensor SpatialModel::query_position(std::span<const ReferencePoint> refs,
                                    const Tensor& keypoints) const {
  return pos_mlp_(keypoint_position_input(refs, keypoints, config_.attention.d_model));
}

SpatialPoseSet SpatialModel::spatial_decode(const MultiScaleFeatureMemory& memory,
                                            const Tensor& learned_queries) const {
  const std::size_t n = learned_queries.dim(0);
  const std::size_t kj = config_.joints;
  SpatialPoseSet out;

  const Tensor ref_logits = ref_head_(learned_queries);
  std::vector<Tensor> repeated(kj, ref_logits);
  Tensor kps = reshape(
      sigmoid(add_bias(concat_cols(repeated), reshape(template_, {2 * kj}))),
      {n, kj, 2});

  Tensor q = learned_queries;
  Tensor logits, o;
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    const DecoderLayer& layer = decoder[i];
    const std::vector<ReferencePoint> refs = keypoint_centers(kps);
    const Tensor pos = query_position(refs, kps);

    Tensor h = layer.norm_sa(q);
    const Tensor hp = add(h, pos);
    q = add(q, layer.self_attn.forward(hp, hp, h));
    h = layer.norm_ca(q);
    q = add(q, msda(layer.cross_attn, add(h, pos), refs, memory));
    q = add(q, layer.ffn(layer.norm_ffn(q)));

    o = layer.norm_head(q);
    const Tensor delta = layer.keypoint_head(o);
    const Tensor refined = reshape(
        shift_logit(reshape(kps, {n, 2 * kj}), delta, kMaxKeypointLogit),
        {n, kj, 2});
    logits = reshape(layer.score_head(o), {n});
    out.layer_keypoints.push_back(refined);
    out.layer_logits.push_back(logits);
    kps = refined.detach();
  }

  if (decoder.empty()) {
    o = learned_queries;
    logits = Tensor({n});
    out.layer_keypoints.push_back(kps);
  }
  out.pose_queries = o;
  out.keypoints = out.layer_keypoints.back();
  out.score_logits = logits;
  out.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.scores[i] = 1.0 / (1.0 + std::exp(-logits.at(i)));
  }
  out.reference_points = keypoint_centers(out.keypoints);
  return out;
}

SpatialModel::Output SpatialModel::forward(const Tensor& image) const {
  Output out;
  out.memory = spatial_encode(extract_features(image));
  out.poses = spatial_decode(out.memory, queries_);
  return out;
}

}  // namespace vepe
