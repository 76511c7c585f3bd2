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

#include "vepe/gradcheck_suite.hpp"

#include <cmath>

#include "vepe/matching.hpp"
#include "vepe/temporal.hpp"

namespace vepe {

namespace {

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), true);
}

// Entries with |x| in [0.2, 1] and random sign, away from kinks at 0.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(0.2, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return Tensor(shape, std::move(v), true);
}

Tensor constant(const Tensor& t) { return t.detach(); }

void randomize_zero_parameters(ParameterSet& params, Rng& rng) {
  for (auto& e : params.entries()) {
    auto data = e.tensor.data_mut();
    bool all_zero = true;
    for (double v : data) all_zero = all_zero && v == 0.0;
    if (!all_zero) continue;
    for (double& v : data) v = 0.2 * rng.normal();
  }
}

SpatialConfig tiny_spatial() {
  SpatialConfig c;
  c.attention = {8, 2, 2, 2, 3, 16};
  c.queries = 4;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.channels = {4, 8, 8};
  return c;
}

const LevelLayout kTinyLayout{{{4, 4}, {2, 2}}};

}  // namespace

Tensor corrupted_identity(const Tensor& x) {
  const bool track = grad_enabled() && x.requires_grad();
  Tensor out(x.shape(), {x.data().begin(), x.data().end()}, track);
  if (track) {
    auto o = out.impl(), xi = x.impl();
    tape().record("corrupted_identity", [o, xi] {
      if (o->grad.empty()) return;
      auto& g = grad_of(xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * o->grad[i];
    });
  }
  return out;
}

std::vector<GradcheckReport> run_gradcheck_suite(const GradcheckSuiteOptions& options) {
  Rng rng(options.seed);
  std::vector<GradcheckReport> reports;
  auto check = [&](const std::string& name, const GradFn& fn, std::vector<Tensor> inputs,
                   double tol = kGradTol) {
    reports.push_back(gradcheck(name, fn, std::move(inputs), tol));
  };
  using In = const std::vector<Tensor>&;

  // Structure
  check("reshape", [](In x) { return reshape(x[0], {4, 3}); }, {uniform({3, 4}, rng)});
  check("transpose", [](In x) { return transpose(x[0]); }, {uniform({3, 4}, rng)});
  check("concat_rows", [](In x) { return concat_rows({x[0], x[1]}); },
        {uniform({2, 3}, rng), uniform({3, 3}, rng)});
  check("concat_cols", [](In x) { return concat_cols({x[0], x[1]}); },
        {uniform({3, 2}, rng), uniform({3, 4}, rng)});
  check("slice_rows", [](In x) { return slice_rows(x[0], 1, 3); }, {uniform({4, 3}, rng)});
  check("slice_cols", [](In x) { return slice_cols(x[0], 1, 3); }, {uniform({3, 4}, rng)});
  check("gather_rows",
        [](In x) {
          const std::vector<std::size_t> rows{2, 0, 2};
          return gather_rows(x[0], rows);
        },
        {uniform({3, 4}, rng)});
  check("scale_rows",
        [](In x) {
          const std::vector<double> f{0.5, 0.0, -2.0};
          return scale_rows(x[0], f);
        },
        {uniform({3, 4}, rng)});

  // Elementwise
  check("add", [](In x) { return add(x[0], x[1]); }, {uniform({3, 4}, rng), uniform({3, 4}, rng)});
  check("sub", [](In x) { return sub(x[0], x[1]); }, {uniform({3, 4}, rng), uniform({3, 4}, rng)});
  check("mul", [](In x) { return mul(x[0], x[1]); }, {uniform({3, 4}, rng), uniform({3, 4}, rng)});
  check("scale", [](In x) { return scale(x[0], -1.7); }, {uniform({3, 4}, rng)});
  check("add_scalar", [](In x) { return add_scalar(x[0], 0.3); }, {uniform({3, 4}, rng)});
  check("add_bias", [](In x) { return add_bias(x[0], x[1]); },
        {uniform({2, 3, 4}, rng), uniform({4}, rng)});
  check("mul_const",
        [](In x) {
          const std::vector<double> c{1.0, -2.0, 0.5, 3.0, 0.0, 1.5};
          return mul_const(x[0], c);
        },
        {uniform({2, 3}, rng)});
  check("gelu", [](In x) { return gelu(x[0]); }, {uniform({3, 4}, rng, -3.0, 3.0)});
  check("relu", [](In x) { return relu(x[0]); }, {away_from_zero({3, 4}, rng)});
  check("sigmoid", [](In x) { return sigmoid(x[0]); }, {uniform({3, 4}, rng, -4.0, 4.0)});
  check("inverse_sigmoid", [](In x) { return inverse_sigmoid(x[0]); },
        {uniform({3, 4}, rng, 0.1, 0.9)});
  check("clamp", [](In x) { return clamp(x[0], 0.0, 10.0); }, {away_from_zero({3, 4}, rng)});
  check("shift_logit", [](In x) { return shift_logit(x[0], x[1], 30.0); },
        {uniform({3, 4}, rng, 0.1, 0.9), uniform({3, 4}, rng, -2.0, 2.0)});
  check("abs", [](In x) { return abs(x[0]); }, {away_from_zero({3, 4}, rng)});
  check("log", [](In x) { return log(x[0]); }, {uniform({3, 4}, rng, 0.5, 2.0)});
  check("softmax_axis0", [](In x) { return softmax(x[0], 0); }, {uniform({3, 4}, rng)});
  check("softmax_axis1", [](In x) { return softmax(x[0], 1); }, {uniform({2, 3, 4}, rng)});
  check("layer_norm", [](In x) { return layer_norm(x[0], x[1], x[2]); },
        {uniform({3, 5}, rng), uniform({5}, rng, 0.5, 1.5), uniform({5}, rng)});
  check("sum", [](In x) { return sum(x[0]); }, {uniform({3, 4}, rng)});
  check("mean", [](In x) { return mean(x[0]); }, {uniform({3, 4}, rng)});

  // Linear algebra and sampling
  check("matmul", [](In x) { return matmul(x[0], x[1]); },
        {uniform({3, 4}, rng), uniform({4, 2}, rng)});
  check("linear", [](In x) { return linear(x[0], x[1], x[2]); },
        {uniform({2, 3, 4}, rng), uniform({4, 5}, rng), uniform({5}, rng)});
  check("bilinear_sample", [](In x) { return bilinear_sample(x[0], x[1]); },
        {uniform({4, 5, 3}, rng), uniform({6, 2}, rng, -0.8, 4.8)}, kGradTolBilinear);
  check("conv2d", [](In x) { return conv2d(x[0], x[1], x[2], 3, 2, 1); },
        {uniform({6, 6, 2}, rng), uniform({18, 3}, rng), uniform({3}, rng)});
  check("deformable_aggregate",
        [](In x) { return deformable_aggregate(x[0], kTinyLayout, x[1], x[2], 2, 2); },
        {uniform({2, 20, 6}, rng), uniform({3, 2, 2, 2, 2, 2}, rng, 0.05, 0.95),
         uniform({3, 2, 2, 2, 2}, rng, 0.0, 1.0)},
        kGradTolBilinear);
  check("scaled_dot_attention",
        [](In x) { return scaled_dot_attention(x[0], x[1], x[2], 2); },
        {uniform({3, 4}, rng), uniform({5, 4}, rng), uniform({5, 4}, rng)});
  check("scaled_dot_attention_masked",
        [](In x) {
          const std::vector<std::uint8_t> mask{1, 0, 1, 0, 0, 0, 0, 0, 0, 1};
          return scaled_dot_attention(x[0], x[1], x[2], 2, mask, EmptyRowPolicy::kZero);
        },
        {uniform({2, 4}, rng), uniform({5, 4}, rng), uniform({5, 4}, rng)});

  // Losses and similarity
  check("bce_with_logits",
        [](In x) {
          const std::vector<double> t{1.0, 0.0, 0.25, 1.0};
          return bce_with_logits(x[0], t);
        },
        {uniform({4}, rng, -3.0, 3.0)});
  check("cosine_similarity_rows", [](In x) { return cosine_similarity_rows(x[0], x[1]); },
        {uniform({3, 4}, rng), uniform({3, 4}, rng)});
  check("normalize_rows", [](In x) { return normalize_rows(x[0]); }, {uniform({3, 4}, rng)});

  {
    std::vector<PersonAnnotation> gt(2);
    for (std::size_t g = 0; g < 2; ++g) {
      gt[g].track_id = static_cast<std::int64_t>(g);
      gt[g].keypoints.resize(2 * kNumJoints);
      gt[g].visible.assign(kNumJoints, 1);
      for (double& v : gt[g].keypoints) v = rng.uniform(0.1, 0.9);
    }
    gt[1].visible[3] = 0;
    MatchAssignment a;
    a.pairs = {{0, 1}, {2, 0}};
    a.unmatched = {1};
    check("keypoint_loss", [a, gt](In x) { return keypoint_loss(x[0], a, gt); },
          {uniform({3, kNumJoints, 2}, rng, 0.0, 1.0)});
    check("classification_loss", [a](In x) { return classification_loss(x[0], a); },
          {uniform({3}, rng, -3.0, 3.0)});
    check("instance_consistency_loss",
          [](In x) {
            TripletBatch b;
            b.triplets.resize(4);
            b.anchors = x[0];
            b.positives = x[1];
            b.negatives = x[2];
            b.margin = 1.0;
            return instance_consistency_loss(b);
          },
          {uniform({4, 5}, rng), uniform({4, 5}, rng), uniform({4, 5}, rng)});
  }

  // Composed blocks on a tiny model.
  ParameterSet params;
  const SpatialConfig sc = tiny_spatial();
  TemporalConfig tc;
  tc.stpe_layers = 1;
  tc.stdme_layers = 1;
  tc.stpd_layers = 3;
  SpatialModel spatial(params, sc, rng);
  TemporalModel temporal(params, sc, tc, rng);
  randomize_zero_parameters(params, rng);
  params.set_trainable("", false);
  const std::size_t d = sc.attention.d_model;
  AttentionConfig ac = sc.attention;
  MultiHeadAttention mha(params, "check.mha", d, ac.heads, rng);
  DeformableAttention msda1(params, "check.msda", ac, 1, rng);
  DeformableAttention tmsda3(params, "check.tmsda", ac, 3, rng);
  FeedForward ffn(params, "check.ffn", d, ac.ffn_width, rng);
  randomize_zero_parameters(params, rng);
  params.set_trainable("", false);

  std::vector<ReferencePoint> refs;
  for (int i = 0; i < 3; ++i) refs.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
  const std::size_t tokens = kTinyLayout.tokens();

  check("block.multi_head_attention",
        [&mha](In x) { return mha.forward(x[0], x[1], x[1]); },
        {uniform({3, d}, rng), uniform({5, d}, rng)});
  check("block.msda",
        [&msda1, refs](In x) {
          return msda(msda1, x[0], refs, MultiScaleFeatureMemory{x[1], kTinyLayout});
        },
        {uniform({3, d}, rng), uniform({tokens, d}, rng)}, kGradTolBilinear);
  check("block.tmsda",
        [&tmsda3, refs](In x) {
          const MultiScaleFeatureMemory a{x[1], kTinyLayout}, b{x[2], kTinyLayout},
              c{x[3], kTinyLayout};
          return tmsda(tmsda3, x[0], refs, {&a, &b, &c});
        },
        {uniform({3, d}, rng), uniform({tokens, d}, rng), uniform({tokens, d}, rng),
         uniform({tokens, d}, rng)},
        kGradTolBilinear);
  check("block.feed_forward", [&ffn](In x) { return ffn(x[0]); }, {uniform({3, d}, rng)});
  check("block.backbone", [&spatial](In x) { return spatial.extract_features(x[0]).tokens; },
        {uniform({16, 16, 3}, rng, 0.0, 1.0)});
  check("block.spatial_encoder",
        [&spatial](In x) {
          return spatial.spatial_encode(MultiScaleFeatureMemory{x[0], kTinyLayout}).tokens;
        },
        {uniform({tokens, d}, rng)}, kGradTolBilinear);

  {
    InstanceMask mask;
    mask.key_size = 3;
    mask.ref_sizes = {2, 3};
    mask.blocks = {{1, 0, 0, 0, 0, 1}, {0, 0, 1, 0, 0, 0, 0, 0, 0}};
    mask.similarity = {std::vector<double>(6, 0.0), std::vector<double>(9, 0.0)};
    check("block.stpe",
          [&temporal, mask](In x) {
            const std::vector<Tensor> r{x[1], x[2]};
            return temporal.stpe_forward(x[0], r, &mask);
          },
          {uniform({3, d}, rng), uniform({2, d}, rng), uniform({3, d}, rng)});
  }
  check("block.stdme",
        [&temporal](In x) {
          const MultiScaleFeatureMemory a{x[1], kTinyLayout}, b{x[2], kTinyLayout};
          const std::vector<const MultiScaleFeatureMemory*> r{&a, &b};
          return temporal.stdme_forward(MultiScaleFeatureMemory{x[0], kTinyLayout}, r).tokens;
        },
        {uniform({tokens, d}, rng), uniform({tokens, d}, rng), uniform({tokens, d}, rng)},
        kGradTolBilinear);
  {
    // Per-layer input keypoints are held at their unperturbed values.
    const std::size_t n = 3;
    const Tensor kps0 = constant(uniform({n, kNumJoints, 2}, rng, 0.2, 0.8));
    const Tensor logits0 = constant(uniform({n}, rng));
    const Tensor q0 = uniform({n, d}, rng);
    const Tensor mem0 = uniform({tokens, d}, rng);
    std::vector<Tensor> layer_inputs{kps0};
    {
      NoGradGuard guard;
      const TemporalPoseResult r = temporal.stpd_forward(
          q0, MultiScaleFeatureMemory{mem0, kTinyLayout}, kps0, logits0);
      for (std::size_t i = 0; i + 1 < r.layer_keypoints.size(); ++i) {
        layer_inputs.push_back(r.layer_keypoints[i].detach());
      }
    }
    check("block.stpd",
          [&temporal, layer_inputs, logits0](In x) {
            const MultiScaleFeatureMemory memory{x[1], kTinyLayout};
            Tensor q = x[0];
            std::vector<Tensor> outs;
            for (std::size_t i = 0; i < temporal.stpd.size(); ++i) {
              const StpdStep s = temporal.stpd_layer(i, q, memory, layer_inputs[i], logits0);
              outs.push_back(reshape(s.keypoints, {s.keypoints.numel(), 1}));
              outs.push_back(reshape(s.logits, {s.logits.numel(), 1}));
              q = s.queries;
            }
            return concat_rows(outs);
          },
          {q0, mem0}, kGradTolBilinear);
  }
  {
    FrameState frame;
    frame.poses.keypoints = constant(uniform({4, kNumJoints, 2}, rng, 0.2, 0.8));
    frame.poses.scores = {0.9, 0.1, 0.8, 0.7};
    const QuerySelection sel{0, 2, 3};
    check("block.instance_queries",
          [&temporal, frame, sel](In x) {
            FrameState f = frame;
            f.poses.pose_queries = x[0];
            f.memory = {x[1], kTinyLayout};
            return temporal.instance_queries(f, sel).embeddings;
          },
          {uniform({4, d}, rng), uniform({tokens, d}, rng)}, kGradTolBilinear);
  }

  if (options.corrupt_fixture) {
    check("fixture.corrupted_identity", [](In x) { return corrupted_identity(x[0]); },
          {uniform({3, 4}, rng)});
  }
  return reports;
}

}  // namespace vepe
