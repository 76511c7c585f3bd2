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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "vepe/checkpoint.hpp"
#include "vepe/gradcheck_suite.hpp"
#include "vepe/pipeline.hpp"

using namespace vepe;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradcheckSeconds = 300.0;
constexpr double kWeightSumTol = 1e-12;
constexpr double kSingleFrameTol = 1e-12;
constexpr std::size_t kAttentionConfigs = 100;
constexpr std::size_t kHungarianMatrices = 500;
constexpr std::size_t kHungarianMaxSide = 8;
constexpr double kHungarianTol = 1e-9;
constexpr std::size_t kFixedPointTrials = 20;
constexpr std::size_t kTriplets = 1000;
constexpr double kScaleTol = 1e-12;
constexpr std::size_t kBenchmarkClips = 200;
constexpr double kMinGainPoints = 3.0;
constexpr double kBudgetSeconds = 7200.0;
constexpr double kSweepSlackPoints = 1.0;
constexpr double kRuntimeRatio = 1.2;
constexpr double kTrackingRate = 0.9;

// Benchmark protocol.
constexpr std::size_t kImageSize = 64;
constexpr std::size_t kClipFrames = 4;
constexpr std::size_t kTrainClips = 60;
constexpr std::uint64_t kTrainSeed = 11;
constexpr std::uint64_t kEvalSeed = 99;
constexpr std::size_t kSpatialEpochs = 30;
constexpr double kSpatialLr = 1e-3;
constexpr std::size_t kTemporalEpochs = 6;
constexpr double kTemporalLr = 5e-4;
constexpr std::size_t kTrackTrainClips = 30;
constexpr std::size_t kTrackEvalClips = 50;
constexpr std::size_t kTrackEpochs = 3;
constexpr std::uint64_t kTrackTrainSeed = 21;
constexpr std::uint64_t kTrackEvalSeed = 23;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

void randomize(ParameterSet& params, Rng& rng, double scale, const std::string& skip = "") {
  for (auto& e : params.entries()) {
    if (!skip.empty() && e.name.find(skip) != std::string::npos) continue;
    for (double& v : e.tensor.data_mut()) v = scale * rng.normal();
  }
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto reports = run_gradcheck_suite();
  const double secs = seconds_since(t0);
  std::size_t failed = 0;
  double worst_plain = 0.0, worst_sampled = 0.0;
  std::set<std::string> names;
  for (const auto& r : reports) {
    names.insert(r.op);
    if (!r.passed) {
      ++failed;
      progress("gradcheck " + r.summary());
    }
    if (r.tol == kGradTol) worst_plain = std::max(worst_plain, r.max_rel_error());
    if (r.tol == kGradTolBilinear) worst_sampled = std::max(worst_sampled, r.max_rel_error());
  }
  bool blocks = true;
  for (const char* b : {"block.stpe", "block.stdme", "block.stpd"}) blocks = blocks && names.count(b);
  GradcheckSuiteOptions corrupt;
  corrupt.corrupt_fixture = true;
  bool caught = false;
  for (const auto& r : run_gradcheck_suite(corrupt)) {
    if (r.op == "fixture.corrupted_identity") caught = !r.passed;
  }
  Outcome o;
  o.pass = failed == 0 && blocks && caught && secs < kGradcheckSeconds;
  o.detail = std::to_string(reports.size()) + " checks, " + std::to_string(failed) + " failed, worst " +
             fmt("%.2e", worst_plain) + " (tol 1e-4), sampled " + fmt("%.2e", worst_sampled) +
             " (tol 1e-3), blocks " + (blocks ? "present" : "MISSING") + ", corrupted fixture " +
             (caught ? "caught" : "MISSED") + ", " + fmt("%.1f", secs) + " s (limit 300 s)";
  return o;
}

// 2
Outcome attention_invariants() {
  Rng rng(2);
  double worst_sum = 0.0, worst_single = 0.0;
  for (std::size_t trial = 0; trial < kAttentionConfigs; ++trial) {
    const std::size_t heads = 1 + rng.index(4), levels = 1 + rng.index(4), points = 1 + rng.index(4),
                      frames = 1 + rng.index(4), dh = 2 + rng.index(3), nq = 1 + rng.index(6);
    const AttentionConfig cfg{heads * dh, heads, levels, points, frames, 16};
    LevelLayout layout;
    for (std::size_t l = 0; l < levels; ++l) {
      layout.shapes.push_back({std::max<std::size_t>(1, (2 + rng.index(7)) >> (l / 2)),
                               std::max<std::size_t>(1, (2 + rng.index(7)) >> (l / 2))});
    }
    std::vector<ReferencePoint> refs;
    for (std::size_t i = 0; i < nq; ++i) refs.push_back({rng.uniform(), rng.uniform()});
    const Tensor q = uniform({nq, cfg.d_model}, rng);

    ParameterSet p;
    DeformableAttention attn(p, "t", cfg, frames, rng);
    randomize(p, rng, 1.0);
    std::vector<MultiScaleFeatureMemory> mems;
    for (std::size_t f = 0; f < frames; ++f) mems.push_back({uniform({layout.tokens(), cfg.d_model}, rng), layout});
    std::vector<const MultiScaleFeatureMemory*> ptrs;
    for (const auto& m : mems) ptrs.push_back(&m);
    DeformableTrace trace;
    tmsda(attn, q, refs, ptrs, &trace);
    const std::size_t per_head = frames * levels * points;
    for (std::size_t i = 0; i < nq * heads; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < per_head; ++j) s += trace.weights.at(i * per_head + j);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }

    ParameterSet p1;
    DeformableAttention single(p1, "s", cfg, 1, rng);
    randomize(p1, rng, 1.0);
    const Tensor a = msda(single, q, refs, mems[0]);
    const Tensor b = tmsda(single, q, refs, {&mems[0]});
    for (std::size_t i = 0; i < a.numel(); ++i) worst_single = std::max(worst_single, std::abs(a.at(i) - b.at(i)));
  }
  Outcome o;
  o.pass = worst_sum <= kWeightSumTol && worst_single <= kSingleFrameTol;
  o.detail = std::to_string(kAttentionConfigs) + " configs, max |sum - 1| " + fmt("%.1e", worst_sum) +
             " (tol 1e-12), max |T=1 tmsda - msda| " + fmt("%.1e", worst_single) + " (tol 1e-12)";
  return o;
}

double exhaustive_min(const std::vector<double>& cost, std::size_t p, std::size_t g) {
  const bool rows_small = p <= g;
  const std::size_t small = rows_small ? p : g, large = rows_small ? g : p;
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < small; ++i) c += rows_small ? cost[i * g + perm[i]] : cost[perm[i] * g + i];
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return small == 0 ? 0.0 : best;
}

// 3
Outcome matching_oracle() {
  Rng rng(3);
  std::size_t agree = 0;
  for (std::size_t trial = 0; trial < kHungarianMatrices; ++trial) {
    const std::size_t p = 1 + rng.index(kHungarianMaxSide), g = 1 + rng.index(kHungarianMaxSide);
    std::vector<double> cost(p * g);
    // Integer costs on every fourth matrix exercise ties.
    const bool ties = trial % 4 == 0;
    for (double& c : cost) c = ties ? static_cast<double>(rng.index(4)) : rng.uniform(0.0, 10.0);
    const MatchAssignment m = hungarian_match(cost, p, g);
    double sum = 0.0;
    std::set<std::size_t> rows, cols;
    for (const auto& [i, j] : m.pairs) {
      sum += cost[i * g + j];
      rows.insert(i);
      cols.insert(j);
    }
    const bool injective = rows.size() == m.pairs.size() && cols.size() == m.pairs.size() &&
                           m.pairs.size() == std::min(p, g) && m.unmatched.size() == p - m.pairs.size();
    const double best = exhaustive_min(cost, p, g);
    agree += injective && std::abs(sum - best) <= kHungarianTol && std::abs(m.total_cost - best) <= kHungarianTol;
  }
  Outcome o;
  o.pass = agree == kHungarianMatrices;
  o.detail = std::to_string(agree) + "/" + std::to_string(kHungarianMatrices) +
             " matrices (1..8 x 1..8) equal the exhaustive minimum (tol 1e-9)";
  return o;
}

// 4
Outcome stpd_fixed_point() {
  std::size_t exact = 0, layers = 0;
  for (std::size_t trial = 0; trial < kFixedPointTrials; ++trial) {
    Rng rng(400 + trial);
    SpatialConfig sc;
    sc.attention = AttentionConfig{32, 4, 3, 2, 3, 64};
    sc.queries = 12;
    sc.encoder_layers = 1;
    sc.decoder_layers = 1;
    sc.channels = {4, 8, 16, 16};
    ParameterSet p;
    SpatialModel spatial(p, sc, rng);
    TemporalModel temporal(p, sc, TemporalConfig{}, rng);
    randomize(p, rng, 0.5, "keypoint_head.fc2");
    const SpatialModel::Output o = spatial.forward(uniform({32, 32, 3}, rng, 0.0, 1.0));
    const std::size_t n = 1 + rng.index(8);
    std::vector<double> k(n * kNumJoints * 2);
    // Log-uniform distances from the borders.
    for (double& v : k) {
      const double m = std::exp(rng.uniform(std::log(1e-9), std::log(0.5)));
      v = rng.bernoulli(0.5) ? m : 1.0 - m;
    }
    const Tensor kps({n, kNumJoints, 2}, k);
    const TemporalPoseResult r = temporal.stpd_forward(uniform({n, 32}, rng), o.memory, kps, uniform({n}, rng));
    Tensor prev = kps;
    for (const Tensor& out : r.layer_keypoints) {
      ++layers;
      exact += bit_equal(out, prev);
      prev = out;
    }
  }
  Outcome o;
  o.pass = exact == layers && layers == 3 * kFixedPointTrials;
  o.detail = std::to_string(exact) + "/" + std::to_string(layers) + " STPD layer outputs bit-identical to their inputs (" +
             std::to_string(kFixedPointTrials) + " random models, 3 layers each)";
  return o;
}

TripletBatch one_triplet(const std::vector<double>& a, const std::vector<double>& p,
                         const std::vector<double>& n, double margin) {
  TripletBatch b;
  b.triplets.push_back({0, 0, 1, 0, 1, 1});
  const std::size_t d = a.size();
  b.anchors = Tensor({1, d}, a);
  b.positives = Tensor({1, d}, p);
  b.negatives = Tensor({1, d}, n);
  b.margin = margin;
  return b;
}

double cosine(const std::vector<double>& x, const std::vector<double>& y) {
  double d = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  return d / std::sqrt(nx * ny);
}

// 5
Outcome triplet_properties() {
  Rng rng(5);
  std::size_t nonneg = 0, zero_iff = 0, scale_ok = 0, satisfied = 0;
  TripletBatch all;
  std::vector<double> sa, sp, sn;
  const std::size_t d = 8;
  for (std::size_t t = 0; t < kTriplets; ++t) {
    std::vector<double> a(d), p(d), n(d);
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = rng.normal();
      // Positives are perturbed anchors.
      p[i] = a[i] + rng.uniform(0.0, 1.5) * rng.normal();
      n[i] = rng.normal();
    }
    const double margin = rng.uniform(0.0, 0.6);
    const double loss = instance_consistency_loss(one_triplet(a, p, n, margin)).item();
    const bool ok = (1.0 - cosine(a, p)) - (1.0 - cosine(a, n)) + margin <= 0.0;
    nonneg += loss >= 0.0;
    zero_iff += (loss == 0.0) == ok;
    satisfied += ok;

    const double c = std::exp(rng.uniform(std::log(1e-3), std::log(1e3)));
    auto scaled = [&](std::vector<double> v) {
      for (double& x : v) x *= c;
      return v;
    };
    const std::size_t which = rng.index(3);
    const double loss_scaled =
        instance_consistency_loss(one_triplet(which == 0 ? scaled(a) : a, which == 1 ? scaled(p) : p,
                                              which == 2 ? scaled(n) : n, margin))
            .item();
    scale_ok += std::abs(loss_scaled - loss) <= kScaleTol * std::max(1.0, loss);
    if (ok) {
      sa.insert(sa.end(), a.begin(), a.end());
      sp.insert(sp.end(), p.begin(), p.end());
      sn.insert(sn.end(), n.begin(), n.end());
      all.triplets.push_back({0, 0, 1, 0, 1, 1});
    }
  }
  // Every satisfied triplet also satisfies a zero margin.
  all.margin = 0.0;
  bool batch_zero = true;
  if (!all.triplets.empty()) {
    const std::size_t b = all.triplets.size();
    all.anchors = Tensor({b, d}, sa);
    all.positives = Tensor({b, d}, sp);
    all.negatives = Tensor({b, d}, sn);
    batch_zero = instance_consistency_loss(all).item() == 0.0;
  }
  Outcome o;
  o.pass = nonneg == kTriplets && zero_iff == kTriplets && scale_ok == kTriplets && batch_zero &&
           satisfied > 0 && satisfied < kTriplets;
  o.detail = std::to_string(kTriplets) + " triplets (" + std::to_string(satisfied) +
             " satisfy the margin): loss >= 0 " + std::to_string(nonneg) + ", zero iff satisfied " +
             std::to_string(zero_iff) + ", scale-invariant " + std::to_string(scale_ok) +
             " (tol 1e-12), satisfied batch " + (batch_zero ? "zero" : "NONZERO");
  return o;
}

// Trained models shared by criteria 6 to 9.
struct Benchmark {
  RunConfig config, stpe_config;
  Dataset train_set, eval_set;
  std::unique_ptr<VepeModel> full, stpe;
  double spatial_ap = 0.0, stpe_ap = 0.0, full_ap = 0.0, seconds = 0.0;
};

std::vector<Split> benchmark_splits() { return {Split::kOcclusion, Split::kBlur, Split::kFast}; }

RunConfig benchmark_config() {
  RunConfig c;
  c.synth.height = c.synth.width = kImageSize;
  c.synth.frames = kClipFrames;
  c.synth.persons = {2, 4};
  return c;
}

void log_epochs(const std::vector<EpochStats>& stats, const std::string& what) {
  for (const auto& s : stats) {
    progress(what + " epoch " + std::to_string(s.epoch) + " loss " + fmt("%.6f", s.loss));
  }
}

Benchmark run_benchmark(const fs::path& work) {
  Benchmark b;
  const auto t0 = Clock::now();
  b.config = benchmark_config();
  const fs::path train_dir = work / "bench_train", eval_dir = work / "bench_eval";
  generate_dataset(train_dir, b.config.synth, benchmark_splits(), kTrainClips, kTrainSeed);
  generate_dataset(eval_dir, b.config.synth, benchmark_splits(), kBenchmarkClips, kEvalSeed);
  b.train_set = load_dataset(train_dir);
  b.eval_set = load_dataset(eval_dir);

  RunConfig spatial_cfg = b.config;
  spatial_cfg.optimizer.lr = kSpatialLr;
  spatial_cfg.optimizer.epochs = kSpatialEpochs;
  VepeModel spatial(spatial_cfg);
  progress("training spatial baseline");
  log_epochs(train(spatial, b.train_set, TrainMode::kSpatial), "spatial");
  save_checkpoint((work / "spatial.ckpt").string(), spatial.params);

  RunConfig full_cfg = b.config;
  full_cfg.optimizer.lr = kTemporalLr;
  full_cfg.optimizer.epochs = kTemporalEpochs;
  b.stpe_config = full_cfg;
  b.stpe_config.temporal.use_icm = false;
  b.stpe_config.temporal.use_stdme = false;
  b.stpe_config.temporal.use_stpd = false;
  b.stpe_config.loss.instance = 0.0;
  b.full = std::make_unique<VepeModel>(full_cfg);
  b.stpe = std::make_unique<VepeModel>(b.stpe_config);
  load_checkpoint_prefix(work / "spatial.ckpt", b.full->params, "spatial.");
  load_checkpoint_prefix(work / "spatial.ckpt", b.stpe->params, "spatial.");

  const auto train_cache = cache_frames(*b.full, b.train_set);
  TrainOptions opts;
  opts.cache = &train_cache;
  progress("training STPE-only temporal model");
  log_epochs(train(*b.stpe, b.train_set, TrainMode::kTemporal, opts), "stpe-only");
  progress("training full temporal model");
  log_epochs(train(*b.full, b.train_set, TrainMode::kTemporal, opts), "full");
  save_checkpoint((work / "full.ckpt").string(), b.full->params);

  progress("evaluating on " + std::to_string(kBenchmarkClips) + " clips");
  const auto eval_cache = cache_frames(*b.full, b.eval_set);
  const double tau = b.config.tau;
  auto ap = [&](const VepeModel& m, EvalMode mode) {
    const ClipPredictions p = predict(m, b.eval_set, eval_cache, mode);
    return compute_ap(p.frames, p.ground_truth, tau, b.eval_set.clips.size()).mean_ap;
  };
  b.spatial_ap = ap(*b.full, EvalMode::kSpatial);
  b.stpe_ap = ap(*b.stpe, EvalMode::kTemporal);
  b.full_ap = ap(*b.full, EvalMode::kTemporal);
  b.seconds = seconds_since(t0);
  return b;
}

// 6
Outcome ablation(const Benchmark& b) {
  const double gain = 100.0 * (b.full_ap - b.spatial_ap);
  Outcome o;
  o.pass = b.full_ap > b.stpe_ap && b.stpe_ap > b.spatial_ap && gain >= kMinGainPoints &&
           b.seconds <= kBudgetSeconds;
  o.detail = "mAP full " + fmt("%.2f", 100.0 * b.full_ap) + " > STPE-only " + fmt("%.2f", 100.0 * b.stpe_ap) +
             " > spatial " + fmt("%.2f", 100.0 * b.spatial_ap) + ", gain " + fmt("%.2f", gain) +
             " points (min 3), " + std::to_string(kBenchmarkClips) + " eval clips, train+eval " +
             fmt("%.0f", b.seconds) + " s (limit 7200 s)";
  return o;
}

bool interior_ok(const std::vector<SweepRow>& rows, double& worst_gap) {
  const double floor = std::min(rows.front().mean_ap, rows.back().mean_ap);
  bool ok = true;
  worst_gap = 0.0;
  for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
    const double gap = 100.0 * (floor - rows[i].mean_ap);
    worst_gap = std::max(worst_gap, gap);
    ok = ok && gap <= kSweepSlackPoints;
  }
  return ok;
}

std::string sweep_summary(const std::vector<SweepRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += (s.empty() ? "" : " ") + fmt("%.2f", 100.0 * r.mean_ap);
  return s;
}

// 7
Outcome threshold_sweep(Benchmark& b) {
  const std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto rows = sweep_threshold(*b.full, b.eval_set, thresholds);
  const std::string table = sweep_table(rows);
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);
  bool schema = line == "VEPE-SWEEP-1";
  std::getline(in, line);
  schema = schema && line == "threshold mAP(%) retained";
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    double thr = 0.0, ap = 0.0;
    std::size_t retained = 0;
    schema = schema && static_cast<bool>(ls >> thr >> ap >> retained) && thr == thresholds[data_rows];
    ++data_rows;
  }
  schema = schema && data_rows == thresholds.size();
  double gap_default = 0.0, gap_free = 0.0;
  const bool ok_default = interior_ok(rows, gap_default);

  const std::size_t saved = b.full->temporal->config().min_keep;
  b.full->temporal->mutable_config().min_keep = 1;
  const auto free_rows = sweep_threshold(*b.full, b.eval_set, thresholds);
  b.full->temporal->mutable_config().min_keep = saved;
  const bool ok_free = interior_ok(free_rows, gap_free);

  Outcome o;
  o.pass = schema && ok_default && ok_free;
  o.detail = std::string("schema ") + (schema ? "ok" : "BAD") + ", mAP at 0.1..0.5: " + sweep_summary(rows) +
             " (min_keep 5), " + sweep_summary(free_rows) + " (min_keep 1), interior shortfall " +
             fmt("%.2f", std::max(gap_default, gap_free)) + " points (max 1)";
  return o;
}

// 8
Outcome runtime_ratio(const Benchmark& b) {
  const std::vector<std::size_t> counts{2, 12};
  std::map<std::size_t, VideoClip> clips;
  for (std::size_t n : counts) {
    SynthConfig sc = b.config.synth;
    sc.persons = {n, n};
    sc.frames = 3;
    clips[n] = generate_clip(sc, 800 + n);
  }
  const VepeModel& m = *b.full;
  auto forward = [&](std::size_t n) {
    NoGradGuard no_grad;
    const VideoClip& clip = clips.at(n);
    std::vector<FrameState> states;
    for (const Tensor& f : clip.frames) {
      SpatialModel::Output o = m.spatial->forward(f);
      states.push_back({std::move(o.memory), std::move(o.poses)});
    }
    const std::vector<FrameState> refs{states[0], states[2]};
    m.temporal->forward(states[1], refs);
  };
  const TimingTable t = runtime_probe(forward, counts, 9, 2);
  Outcome o;
  o.pass = t.ratio() < kRuntimeRatio;
  o.detail = "median ms 2 persons " + fmt("%.1f", t.rows[0].median_ms) + ", 12 persons " +
             fmt("%.1f", t.rows[1].median_ms) + ", ratio " + fmt("%.3f", t.ratio()) + " (limit 1.2)";
  return o;
}

// 9
Outcome tracking(const Benchmark& b, const fs::path& work) {
  RunConfig cfg = b.full->config;
  cfg.synth.persons = {2, 2};
  cfg.optimizer.epochs = kTrackEpochs;
  generate_dataset(work / "two_train", cfg.synth, {Split::kClean}, kTrackTrainClips, kTrackTrainSeed);
  generate_dataset(work / "two_eval", cfg.synth, {Split::kClean}, kTrackEvalClips, kTrackEvalSeed);
  VepeModel m(cfg);
  load_checkpoint((work / "full.ckpt").string(), m.params);
  progress("temporal training on the 2-person split");
  log_epochs(train(m, load_dataset(work / "two_train"), TrainMode::kTemporal), "2-person");
  const TrackingStats s = tracking_agreement(m, load_dataset(work / "two_eval"));
  Outcome o;
  o.pass = s.total > 0 && s.rate() >= kTrackingRate;
  o.detail = std::to_string(s.agreed) + "/" + std::to_string(s.total) + " matched instances linked to the same track (" +
             fmt("%.1f", 100.0 * s.rate()) + "%, min 90%), " + std::to_string(kTrackEvalClips) + " held-out clips";
  return o;
}

// 10
Outcome determinism(const fs::path& work) {
  RunConfig c;
  c.spatial.attention = AttentionConfig{16, 2, 3, 2, 3, 32};
  c.spatial.queries = 10;
  c.spatial.encoder_layers = 1;
  c.spatial.decoder_layers = 2;
  c.spatial.channels = {4, 8, 8, 8};
  c.synth.height = c.synth.width = 32;
  c.synth.frames = 3;
  c.synth.persons = {1, 3};
  c.optimizer.batch = 2;
  c.optimizer.epochs = 2;
  c.optimizer.lr = 1e-3;
  std::vector<std::string> artifacts;
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path dir = work / "determinism" / run;
    fs::remove_all(dir);
    generate_dataset(dir / "data", c.synth, {Split::kClean, Split::kOcclusion}, 4, c.seed);
    const Dataset data = load_dataset(dir / "data");
    VepeModel m(c);
    train(m, data, TrainMode::kSpatial);
    train(m, data, TrainMode::kTemporal);
    save_checkpoint((dir / "model.ckpt").string(), m.params);
    std::ofstream(dir / "report.txt", std::ios::binary) << evaluate(m, data, EvalMode::kTemporal).to_text();
    std::ofstream(dir / "sweep.txt", std::ios::binary)
        << sweep_table(sweep_threshold(m, data, {0.1, 0.2, 0.3, 0.4, 0.5}));
  }
  std::size_t same = 0, total = 0;
  for (const char* f : {"model.ckpt", "report.txt", "sweep.txt", "data/manifest.json", "data/clip-000003.vclip"}) {
    ++total;
    const std::string a = read_file(work / "determinism" / "run_a" / f);
    same += !a.empty() && a == read_file(work / "determinism" / "run_b" / f);
  }
  Outcome o;
  o.pass = same == total;
  o.detail = std::to_string(same) + "/" + std::to_string(total) +
             " artifacts byte-identical across two seeded runs (checkpoint, report, sweep, manifest, clip)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks, one PASS/FAIL line per criterion"};
  std::string work = (fs::temp_directory_path() / "vepe_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for datasets and checkpoints");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(work);
  fs::create_directories(dir);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::optional<Benchmark> bench;
  auto benchmark = [&]() -> Benchmark& {
    if (!bench) bench = run_benchmark(dir);
    return *bench;
  };

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient suite"},       {2, "temporal deformable attention invariants"},
      {3, "matching oracle"},      {4, "cascaded decoder fixed point"},
      {5, "instance consistency loss properties"},
      {6, "directional ablation"}, {7, "threshold sweep"},
      {8, "runtime vs instance count"},
      {9, "instance tracking"},    {10, "determinism"}};
  const std::map<int, std::function<Outcome()>> checks{
      {1, gradient_suite},
      {2, attention_invariants},
      {3, matching_oracle},
      {4, stpd_fixed_point},
      {5, triplet_properties},
      {6, [&] { return ablation(benchmark()); }},
      {7, [&] { return threshold_sweep(benchmark()); }},
      {8, [&] { return runtime_ratio(benchmark()); }},
      {9, [&] { return tracking(benchmark(), dir); }},
      {10, [&] { return determinism(dir); }}};

  bool all = true;
  for (const auto& [id, name] : names) {
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = checks.at(id)();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}
