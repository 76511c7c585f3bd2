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

#include <sstream>

#include "common.hpp"
#include "vepe/temporal.hpp"

using namespace vepe;
using vepe::test::bit_equal;
using vepe::test::max_abs_diff;
using vepe::test::random_tensor;

namespace {

SpatialConfig small_spatial(std::size_t frames = 3) {
  SpatialConfig c;
  c.attention = AttentionConfig{16, 2, 3, 2, frames, 32};
  c.queries = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.channels = {4, 8, 8, 8};
  return c;
}

struct Fixture {
  explicit Fixture(TemporalConfig tc = {}, std::size_t frames = 3, std::uint64_t seed = 1)
      : rng(seed), spatial(params, small_spatial(frames), rng),
        temporal(params, small_spatial(frames), tc, rng) {
    vepe::test::randomize(params, rng);
  }

  FrameState frame() {
    const SpatialModel::Output o = spatial.forward(random_tensor({32, 32, 3}, rng, 0, 1));
    return {o.memory, o.poses};
  }

  Rng rng;
  ParameterSet params;
  SpatialModel spatial;
  TemporalModel temporal;
};

Tensor random_keypoints(std::size_t n, Rng& rng) {
  return random_tensor({n, kNumJoints, 2}, rng, 0.05, 0.95);
}

InstanceQuerySet unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  return {normalize_rows(random_tensor({n, d}, rng))};
}

double closed_form(double q, double delta) {
  const double z = std::log(q / (1.0 - q)) + delta;
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

TEST_CASE("pose query selection examples") {
  const std::vector<double> scores{0.9, 0.5, 0.2};
  CHECK(pose_query_selection(scores, 0.3, 1) == QuerySelection{0, 1});
  CHECK(pose_query_selection(scores, 0.0, 1) == QuerySelection{0, 1, 2});
  CHECK(pose_query_selection(scores, 0.95, 2) == QuerySelection{0, 1});
  CHECK(pose_query_selection(std::vector<double>{0.1, 0.4, 0.3}, 0.9, 2) == QuerySelection{1, 2});
  CHECK(pose_query_selection(std::vector<double>{0.1}, 0.9, 5) == QuerySelection{0});
  CHECK(TemporalConfig{}.threshold == 0.3);
  CHECK(TemporalConfig{}.stpd_layers == 3);
}

TEST_CASE("pose query selection keeps exactly the passing queries or the top scores") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.index(20), min_keep = 1 + rng.index(6);
    const double threshold = rng.uniform();
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.uniform();
    const QuerySelection sel = pose_query_selection(scores, threshold, min_keep);
    CHECK(std::is_sorted(sel.begin(), sel.end()));
    const std::size_t passing =
        static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; }));
    if (passing >= min_keep) {
      CHECK(sel.size() == passing);
      for (std::size_t i : sel) CHECK(scores[i] >= threshold);
    } else {
      CHECK(sel.size() == std::min(min_keep, n));
      double lowest_kept = 1.0;
      for (std::size_t i : sel) lowest_kept = std::min(lowest_kept, scores[i]);
      for (std::size_t i = 0; i < n; ++i) {
        if (std::find(sel.begin(), sel.end(), i) == sel.end()) CHECK(scores[i] <= lowest_kept);
      }
    }
  }
}

TEST_CASE("instance mask examples") {
  const InstanceQuerySet key{Tensor({2, 2}, {1, 0, 0, 1})};
  const std::vector<InstanceQuerySet> refs{{Tensor({2, 2}, {0.9, 0.2, 0.1, 0.8})}};
  const InstanceMask m = compute_instance_mask(key, refs);
  CHECK(m.blocks[0] == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(m.similarity[0][0] == 0.9);
  CHECK(m.similarity[0][3] == 0.8);
  CHECK(m.link(0, 0) == 0);
  CHECK(m.link(0, 1) == 1);

  Rng rng(3);
  const InstanceQuerySet k = unit_rows(3, 8, rng);
  InstanceQuerySet r = unit_rows(4, 8, rng);
  for (std::size_t c = 0; c < 8; ++c) r.embeddings.data_mut()[2 * 8 + c] = k.embeddings.at(1 * 8 + c);
  const InstanceMask self = compute_instance_mask(k, std::vector<InstanceQuerySet>{r});
  CHECK(self.similarity[0][1 * 4 + 2] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(self.link(0, 1) == 2);
}

TEST_CASE("instance mask against a per-row argmax oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const InstanceQuerySet key = unit_rows(5, 6, rng);
    const std::vector<InstanceQuerySet> refs{unit_rows(7, 6, rng), unit_rows(3, 6, rng)};
    const InstanceMask m = compute_instance_mask(key, refs);
    REQUIRE(m.blocks.size() == 2);
    for (std::size_t f = 0; f < 2; ++f) {
      const std::size_t n = refs[f].size();
      for (std::size_t i = 0; i < 5; ++i) {
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < 6; ++c) dot += key.embeddings.at(i * 6 + c) * refs[f].embeddings.at(j * 6 + c);
          CHECK(std::abs(dot - m.similarity[f][i * n + j]) < 1e-12);
          if (dot > best_sim) {
            best_sim = dot;
            best = j;
          }
        }
        std::size_t trues = 0;
        for (std::size_t j = 0; j < n; ++j) trues += m.blocks[f][i * n + j];
        CHECK(trues == 1);
        CHECK(m.blocks[f][i * n + best] == 1);
      }
    }
    const auto flat = m.concatenated();
    CHECK(flat.size() == 5 * 10);
    CHECK(flat[0 * 10 + 7 + m.link(1, 0)] == 1);
  }
}

TEST_CASE("instance queries are unit rows paired with the selection") {
  Fixture fx;
  const FrameState f = fx.frame();
  const InstanceQuerySet s = fx.temporal.instance_queries(f, {0, 3, 5});
  REQUIRE(s.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    double n = 0.0;
    for (std::size_t c = 0; c < 16; ++c) n += s.embeddings.at(i * 16 + c) * s.embeddings.at(i * 16 + c);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
  TemporalConfig off;
  off.use_icm = false;
  Fixture no_icm(off);
  CHECK_THROWS_AS(no_icm.temporal.instance_queries(f, {0}), ConfigError);
}

TEST_CASE("pose encoder without references runs only the self and feed-forward path") {
  Fixture fx;
  const Tensor q = random_tensor({4, 16}, fx.rng);
  Tensor x = q;
  for (const StpeLayer& layer : fx.temporal.stpe) {
    const Tensor h = layer.norm_sa(x);
    x = add(x, layer.self_attn.forward(h, h, h));
    x = add(x, layer.ffn(layer.norm_ffn(x)));
  }
  CHECK(bit_equal(fx.temporal.stpe_forward(q, {}, nullptr), x));
  CHECK(bit_equal(fx.temporal.stpe_forward(q, std::vector<Tensor>{Tensor({0, 16})}, nullptr), x));
}

TEST_CASE("a fully blocked key row is untouched by cross-attention") {
  TemporalConfig tc;
  tc.stpe_layers = 1;
  Fixture fx(tc);
  const Tensor q = random_tensor({3, 16}, fx.rng);
  const std::vector<Tensor> refs{random_tensor({4, 16}, fx.rng)};
  InstanceMask mask;
  mask.key_size = 3;
  mask.ref_sizes = {4};
  mask.blocks = {{1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0}};
  mask.similarity = {std::vector<double>(12, 0.0)};
  const Tensor with = fx.temporal.stpe_forward(q, refs, &mask);
  const Tensor without = fx.temporal.stpe_forward(q, {}, nullptr);
  CHECK(bit_equal(slice_rows(with, 1, 2), slice_rows(without, 1, 2)));
  CHECK(max_abs_diff(slice_rows(with, 0, 1), slice_rows(without, 0, 1)) > 1e-6);
  mask.blocks[0].pop_back();
  mask.ref_sizes = {4};
  InstanceMask bad = mask;
  bad.ref_sizes = {3};
  bad.blocks = {std::vector<std::uint8_t>(9, 1)};
  CHECK_THROWS_AS(fx.temporal.stpe_forward(q, refs, &bad), ShapeError);
}

TEST_CASE("perturbing masked-out reference queries leaves the encoder output bit-identical") {
  Fixture fx;
  Rng& rng = fx.rng;
  for (int trial = 0; trial < 25; ++trial) {
    const Tensor q = random_tensor({4, 16}, rng);
    const std::vector<Tensor> refs{random_tensor({3, 16}, rng), random_tensor({5, 16}, rng)};
    const InstanceMask mask = compute_instance_mask(
        unit_rows(4, 8, rng), std::vector<InstanceQuerySet>{unit_rows(3, 8, rng), unit_rows(5, 8, rng)});
    const Tensor base = fx.temporal.stpe_forward(q, refs, &mask);
    std::vector<Tensor> perturbed{refs[0].clone(), refs[1].clone()};
    for (std::size_t f = 0; f < 2; ++f) {
      const std::size_t n = mask.ref_sizes[f];
      for (std::size_t j = 0; j < n; ++j) {
        bool used = false;
        for (std::size_t i = 0; i < 4; ++i) used = used || mask.blocks[f][i * n + j];
        if (used) continue;
        for (std::size_t c = 0; c < 16; ++c) perturbed[f].data_mut()[j * 16 + c] = rng.uniform(-50, 50);
      }
    }
    CHECK(bit_equal(fx.temporal.stpe_forward(q, perturbed, &mask), base));
  }
}

TEST_CASE("pose encoder is equivariant to key permutations with a permuted mask") {
  Fixture fx;
  const Tensor q = random_tensor({4, 16}, fx.rng);
  const std::vector<Tensor> refs{random_tensor({3, 16}, fx.rng)};
  const InstanceQuerySet key = unit_rows(4, 8, fx.rng);
  const std::vector<InstanceQuerySet> ref_inst{unit_rows(3, 8, fx.rng)};
  const std::vector<std::size_t> perm{2, 3, 0, 1};
  const InstanceMask m = compute_instance_mask(key, ref_inst);
  const InstanceMask pm = compute_instance_mask({gather_rows(key.embeddings, perm)}, ref_inst);
  CHECK(max_abs_diff(gather_rows(fx.temporal.stpe_forward(q, refs, &m), perm),
                     fx.temporal.stpe_forward(gather_rows(q, perm), refs, &pm)) < 1e-12);
}

TEST_CASE("memory encoder shapes and duplicated references") {
  Fixture fx;
  const FrameState key = fx.frame(), a = fx.frame(), b = fx.frame();
  const std::vector<const MultiScaleFeatureMemory*> refs{&a.memory, &b.memory};
  const MultiScaleFeatureMemory out = fx.temporal.stdme_forward(key.memory, refs);
  CHECK(out.layout == key.memory.layout);
  CHECK(out.tokens.shape() == key.memory.tokens.shape());

  const std::vector<const MultiScaleFeatureMemory*> dup{&key.memory, &key.memory};
  const MultiScaleFeatureMemory d = fx.temporal.stdme_forward(key.memory, dup);
  for (double v : d.tokens.data()) CHECK(std::isfinite(v));
  const StdmeLayer& layer = fx.temporal.stdme[0];
  const MultiScaleFeatureMemory nk{layer.norm_temporal(key.memory.tokens), key.memory.layout};
  DeformableTrace trace;
  tmsda(layer.temporal, nk.tokens, key.memory.token_centers(), {&nk, &nk, &nk}, &trace);
  const std::size_t per_head = 3 * 3 * 2;
  for (std::size_t i = 0; i < trace.weights.numel() / per_head; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per_head; ++j) s += trace.weights.at(i * per_head + j);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("memory encoder errors") {
  Fixture fx;
  const FrameState key = fx.frame();
  MultiScaleFeatureMemory other = vepe::test::random_memory(LevelLayout{{{4, 4}, {2, 2}, {1, 1}}}, 16, fx.rng);
  CHECK_THROWS_AS(fx.temporal.stdme_forward(key.memory, std::vector<const MultiScaleFeatureMemory*>{&other, &other}),
                  ConfigError);
  CHECK_THROWS_AS(fx.temporal.stdme_forward(key.memory, std::vector<const MultiScaleFeatureMemory*>{&key.memory}),
                  ConfigError);
}

TEST_CASE("single memory encoder layer equals msda, tmsda and ffn composed by hand") {
  TemporalConfig tc;
  tc.stdme_layers = 1;
  Fixture fx(tc);
  const FrameState key = fx.frame(), a = fx.frame(), b = fx.frame();
  const StdmeLayer& layer = fx.temporal.stdme[0];
  const auto centers = key.memory.token_centers();
  const MultiScaleFeatureMemory intra{layer.norm_intra(key.memory.tokens), key.memory.layout};
  Tensor x = add(key.memory.tokens, layer.intra.forward(intra.tokens, centers,
                                                        std::vector<const MultiScaleFeatureMemory*>{&intra}));
  const MultiScaleFeatureMemory nk{layer.norm_temporal(x), key.memory.layout};
  const MultiScaleFeatureMemory na{layer.norm_temporal(a.memory.tokens), a.memory.layout};
  const MultiScaleFeatureMemory nb{layer.norm_temporal(b.memory.tokens), b.memory.layout};
  x = add(x, layer.temporal.forward(nk.tokens, centers,
                                    std::vector<const MultiScaleFeatureMemory*>{&nk, &na, &nb}));
  x = add(x, layer.ffn.fc2(gelu(layer.ffn.fc1(layer.norm_ffn(x)))));
  const MultiScaleFeatureMemory out =
      fx.temporal.stdme_forward(key.memory, std::vector<const MultiScaleFeatureMemory*>{&a.memory, &b.memory});
  CHECK(max_abs_diff(out.tokens, x) <= 1e-12);
}

TEST_CASE("zero-initialized offset heads keep keypoints through all three layers") {
  Fixture base;
  ParameterSet p;
  Rng rng(11);
  SpatialModel spatial(p, small_spatial(), rng);
  TemporalModel temporal(p, small_spatial(), TemporalConfig{}, rng);
  // Randomize everything except the zero-initialized offset output layers.
  for (auto& e : p.entries()) {
    if (e.name.find("keypoint_head.fc2") != std::string::npos) continue;
    for (double& v : e.tensor.data_mut()) v = 0.3 * rng.normal();
  }
  const Tensor kps = random_keypoints(5, rng);
  const TemporalPoseResult r = temporal.stpd_forward(
      random_tensor({5, 16}, rng), base.frame().memory, kps, random_tensor({5}, rng));
  REQUIRE(r.layer_keypoints.size() == 3);
  Tensor prev = kps;
  for (const Tensor& k : r.layer_keypoints) {
    CHECK(vepe::test::bit_equal(k, prev));
    prev = k;
  }
}

TEST_CASE("one refinement step against the closed form") {
  Fixture fx;
  const Tensor kps = random_keypoints(4, fx.rng);
  const Tensor q = random_tensor({4, 16}, fx.rng);
  const FrameState f = fx.frame();
  const StpdStep step = fx.temporal.stpd_layer(0, q, f.memory, kps, Tensor({4}));
  const StpdLayer& layer = fx.temporal.stpd[0];
  const Tensor delta = layer.keypoint_head(layer.norm_head(step.queries));
  double worst = 0.0;
  for (std::size_t i = 0; i < kps.numel(); ++i) {
    worst = std::max(worst, std::abs(step.keypoints.at(i) - closed_form(kps.at(i), delta.at(i))));
  }
  CHECK(worst <= 1e-12);
  const Tensor expect_logits = reshape(layer.score_head(layer.norm_head(step.queries)), {4});
  CHECK(max_abs_diff(step.logits, expect_logits) <= 1e-15);
}

TEST_CASE("refined keypoints stay strictly inside the unit interval") {
  Rng rng(12);
  for (int trial = 0; trial < 2000; ++trial) {
    const double q = rng.uniform(), delta = rng.uniform(-60.0, 60.0);
    const double r = shift_logit(Tensor({1}, {q}), Tensor({1}, {delta}), kMaxKeypointLogit).item();
    CHECK((r > 0.0 && r < 1.0));
  }
  Fixture fx;
  vepe::test::randomize(fx.params, fx.rng, 2.0);
  const TemporalPoseResult r = fx.temporal.stpd_forward(random_tensor({6, 16}, fx.rng, -5, 5), fx.frame().memory,
                                                        random_keypoints(6, fx.rng), Tensor({6}));
  for (const Tensor& k : r.layer_keypoints) {
    for (double v : k.data()) CHECK((v > 0.0 && v < 1.0));
  }
  for (double s : r.scores) CHECK((s >= 0.0 && s <= 1.0));
}

TEST_CASE("decoder is equivariant to joint permutations of queries, keypoints and logits") {
  Fixture fx;
  const Tensor q = random_tensor({5, 16}, fx.rng), kps = random_keypoints(5, fx.rng);
  const Tensor logits = random_tensor({5}, fx.rng);
  const MultiScaleFeatureMemory mem = fx.frame().memory;
  const std::vector<std::size_t> perm{4, 0, 3, 1, 2};
  const TemporalPoseResult a = fx.temporal.stpd_forward(q, mem, kps, logits);
  const Tensor pk = reshape(gather_rows(reshape(kps, {5, 2 * kNumJoints}), perm), {5, kNumJoints, 2});
  const TemporalPoseResult b = fx.temporal.stpd_forward(
      gather_rows(q, perm), mem, pk, reshape(gather_rows(reshape(logits, {5, 1}), perm), {5}));
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(max_abs_diff(gather_rows(reshape(a.layer_keypoints[l], {5, 2 * kNumJoints}), perm),
                       reshape(b.layer_keypoints[l], {5, 2 * kNumJoints})) < 1e-12);
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(a.scores[perm[i]] - b.scores[i]) < 1e-12);
}

TEST_CASE("single-frame clips run deterministically from the keyframe alone") {
  Fixture fx;
  const FrameState key = fx.frame();
  const TemporalOutput a = fx.temporal.forward(key, {});
  const TemporalOutput b = fx.temporal.forward(key, {});
  REQUIRE(a.result.layer_keypoints.size() == 3);
  CHECK(bit_equal(a.result.layer_keypoints.back(), b.result.layer_keypoints.back()));
  CHECK(a.result.scores == b.result.scores);
  CHECK(a.mask->blocks.empty());
  CHECK(a.result.layer_keypoints[0].dim(0) == a.key_selection.size());
}

TEST_CASE("full temporal forward with references and ablations") {
  Fixture fx;
  const FrameState key = fx.frame(), prev = fx.frame(), next = fx.frame();
  const std::vector<FrameState> refs{prev, next};
  const TemporalOutput out = fx.temporal.forward(key, refs);
  REQUIRE(out.mask.has_value());
  CHECK(out.mask->blocks.size() == 2);
  CHECK(out.key_instances.size() == out.key_selection.size());
  CHECK(out.ref_instances[1].size() == out.ref_selections[1].size());
  std::ostringstream os;
  write_diagnostics(os, out);
  CHECK(os.str().find("similarity 1") != std::string::npos);
  CHECK(os.str().find("layer 2") != std::string::npos);

  for (int variant = 0; variant < 4; ++variant) {
    TemporalConfig tc;
    tc.use_stpe = variant != 0;
    tc.use_icm = variant != 1;
    tc.use_stdme = variant != 2;
    tc.use_stpd = variant != 3;
    Fixture ab(tc);
    const TemporalOutput o = ab.temporal.forward(key, refs);
    CHECK(o.result.layer_keypoints.size() == (tc.use_stpd ? 3u : 1u));
    CHECK(o.mask.has_value() == tc.use_icm);
    for (double v : o.result.layer_keypoints.back().data()) CHECK((v > 0.0 && v < 1.0));
  }
}
