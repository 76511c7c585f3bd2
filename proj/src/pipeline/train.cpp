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

#include <cmath>
#include <iomanip>
#include <ostream>

#include "vepe/pipeline.hpp"

namespace vepe {

namespace {

struct Targets {
  std::vector<PersonAnnotation> persons;
  std::vector<std::int64_t> tracks;
};

Targets visible_targets(std::span<const PersonAnnotation> gt) {
  Targets t;
  t.persons = visible_persons(gt);
  for (const PersonAnnotation& p : t.persons) t.tracks.push_back(p.track_id);
  return t;
}

std::vector<double> sigmoid_values(const Tensor& logits) {
  std::vector<double> s(logits.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 1.0 / (1.0 + std::exp(-logits.at(i)));
  return s;
}

Tensor accumulate(const Tensor& total, const Tensor& term) {
  return total.defined() ? add(total, term) : term;
}

struct SampleLoss {
  Tensor total;
  double keypoint = 0.0, classification = 0.0, instance = 0.0;
};

void add_set_loss(SampleLoss& out, const SetLoss& set, const LossWeights& w) {
  out.total = accumulate(out.total, total_loss({set.keypoint, set.classification, {}}, w));
  out.keypoint += set.keypoint.item();
  out.classification += set.classification.item();
}

void temporal_loss(SampleLoss& out, const VepeModel& model, const VideoClip& clip,
                   std::size_t t, const std::vector<std::size_t>& ref_idx,
                   const FrameState& key, std::span<const FrameState> refs, Rng& rng) {
  const RunConfig& cfg = model.config;
  const TemporalOutput res = model.temporal->forward(key, refs);
  const Targets key_targets = visible_targets(clip.annotations[t]);
  add_set_loss(out,
               set_prediction_loss(res.result.layer_keypoints, res.result.layer_logits,
                                   key_targets.persons, cfg.loss),
               cfg.loss);
  if (!cfg.temporal.use_icm || cfg.loss.instance == 0.0) return;

  std::vector<MatchAssignment> assignments;
  std::vector<std::vector<std::int64_t>> tracks;
  std::vector<Tensor> embeddings;
  assignments.push_back(match_selection(key.poses, res.key_selection, key_targets.persons, cfg.loss));
  tracks.push_back(key_targets.tracks);
  embeddings.push_back(res.key_instances.embeddings);
  for (std::size_t f = 0; f < refs.size(); ++f) {
    const Targets rt = visible_targets(clip.annotations[ref_idx[f]]);
    assignments.push_back(match_selection(refs[f].poses, res.ref_selections[f], rt.persons, cfg.loss));
    tracks.push_back(rt.tracks);
    embeddings.push_back(res.ref_instances[f].embeddings);
  }
  const TripletBatch batch = build_triplets(assignments, tracks, embeddings, rng, cfg.margin);
  if (batch.empty()) return;
  const Tensor icl = instance_consistency_loss(batch);
  out.total = accumulate(out.total, scale(icl, cfg.loss.instance));
  out.instance += icl.item();
}

void write_epoch(std::ostream& os, TrainMode mode, const EpochStats& s) {
  os << std::setprecision(9) << std::fixed;
  os << "epoch " << s.epoch << " mode " << train_mode_name(mode) << " loss " << s.loss
     << " keypoint " << s.keypoint << " classification " << s.classification << " instance "
     << s.instance << " steps " << s.steps << '\n';
  os.unsetf(std::ios::floatfield);
}

}  // namespace

std::vector<PersonAnnotation> visible_persons(std::span<const PersonAnnotation> gt) {
  std::vector<PersonAnnotation> out;
  for (const PersonAnnotation& p : gt) {
    if (p.visible_count() > 0) out.push_back(p);
  }
  return out;
}

MatchAssignment match_selection(const SpatialPoseSet& poses, const QuerySelection& selection,
                                std::span<const PersonAnnotation> targets,
                                const LossWeights& weights) {
  const std::size_t k2 = poses.keypoints.numel() / std::max<std::size_t>(poses.size(), 1);
  std::vector<double> cost(selection.size() * targets.size());
  for (std::size_t i = 0; i < selection.size(); ++i) {
    const auto row = poses.keypoints.data().subspan(selection[i] * k2, k2);
    for (std::size_t g = 0; g < targets.size(); ++g) {
      cost[i * targets.size() + g] =
          match_cost(row, poses.scores[selection[i]], targets[g], weights);
    }
  }
  return hungarian_match(cost, selection.size(), targets.size());
}

std::vector<std::size_t> reference_frames(std::size_t t, std::size_t n, std::size_t frames) {
  std::vector<std::size_t> refs;
  for (std::size_t i = 0; i + 1 < frames; ++i) {
    const std::size_t d = i / 2 + 1;
    std::size_t r = t;
    if (i % 2 == 0) {
      if (t >= d) r = t - d;
    } else if (t + d < n) {
      r = t + d;
    }
    refs.push_back(r);
  }
  return refs;
}

SetLoss set_prediction_loss(const std::vector<Tensor>& layer_keypoints,
                            const std::vector<Tensor>& layer_logits,
                            std::span<const PersonAnnotation> gt, const LossWeights& weights) {
  if (layer_keypoints.size() != layer_logits.size() || layer_keypoints.empty()) {
    throw ShapeError("set_prediction_loss: need matching, nonempty per-layer outputs");
  }
  const Targets targets = visible_targets(gt);
  SetLoss out;
  for (std::size_t l = 0; l < layer_keypoints.size(); ++l) {
    const Tensor& kps = layer_keypoints[l];
    const Tensor& logits = layer_logits[l];
    const std::vector<double> scores = sigmoid_values(logits);
    const auto cost = match_cost_matrix(kps, scores, targets.persons, weights);
    const MatchAssignment a = hungarian_match(cost, scores.size(), targets.persons.size());
    out.keypoint = accumulate(out.keypoint, keypoint_loss(kps, a, targets.persons));
    out.classification = accumulate(out.classification, classification_loss(logits, a));
  }
  return out;
}

std::vector<std::vector<FrameState>> cache_frames(const VepeModel& model, const Dataset& data) {
  NoGradGuard no_grad;
  std::vector<std::vector<FrameState>> cache;
  for (const VideoClip& clip : data.clips) {
    std::vector<FrameState> frames;
    for (const Tensor& image : clip.frames) {
      SpatialModel::Output o = model.spatial->forward(image);
      frames.push_back({std::move(o.memory), std::move(o.poses)});
    }
    cache.push_back(std::move(frames));
  }
  return cache;
}

std::vector<EpochStats> train(VepeModel& model, const Dataset& data, TrainMode mode,
                              const TrainOptions& options) {
  check_joints(model, data);
  const RunConfig& cfg = model.config;
  model.params.set_trainable("spatial.", mode != TrainMode::kTemporal);
  model.params.set_trainable("temporal.", mode != TrainMode::kSpatial);
  model.params.zero_grad();
  AdamW optimizer(model.params, cfg.optimizer);

  std::vector<std::vector<FrameState>> own_cache;
  const std::vector<std::vector<FrameState>>* cache = options.cache;
  if (mode == TrainMode::kTemporal && cache == nullptr) {
    own_cache = cache_frames(model, data);
    cache = &own_cache;
  }

  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t c = 0; c < data.clips.size(); ++c) {
    for (std::size_t t = 0; t < data.clips[c].size(); ++t) samples.emplace_back(c, t);
  }
  const std::size_t frames = cfg.spatial.attention.frames;
  const std::size_t batch = cfg.optimizer.batch;

  std::vector<EpochStats> history;
  for (std::size_t epoch = 1; epoch <= cfg.optimizer.epochs; ++epoch) {
    Rng order(mix_seed(cfg.seed, 1000 + epoch));
    for (std::size_t i = samples.size(); i > 1; --i) {
      std::swap(samples[i - 1], samples[order.index(i)]);
    }
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t in_batch = 0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const auto [c, t] = samples[s];
      const VideoClip& clip = data.clips[c];
      Rng rng(mix_seed(mix_seed(cfg.seed, epoch), s));
      SampleLoss loss;
      {
        TapeScope scope;
        const auto ref_idx = reference_frames(t, clip.size(), frames);
        if (mode == TrainMode::kSpatial) {
          const SpatialModel::Output o = model.spatial->forward(clip.frames[t]);
          add_set_loss(loss,
                       set_prediction_loss(o.poses.layer_keypoints, o.poses.layer_logits,
                                           clip.annotations[t], cfg.loss),
                       cfg.loss);
        } else if (mode == TrainMode::kTemporal) {
          const auto& states = (*cache)[c];
          std::vector<FrameState> refs;
          for (std::size_t r : ref_idx) refs.push_back(states[r]);
          temporal_loss(loss, model, clip, t, ref_idx, states[t], refs, rng);
        } else {
          SpatialModel::Output o = model.spatial->forward(clip.frames[t]);
          add_set_loss(loss,
                       set_prediction_loss(o.poses.layer_keypoints, o.poses.layer_logits,
                                           clip.annotations[t], cfg.loss),
                       cfg.loss);
          const FrameState key{std::move(o.memory), std::move(o.poses)};
          std::vector<FrameState> refs;
          for (std::size_t r : ref_idx) {
            if (r == t) {
              refs.push_back(key);
            } else {
              SpatialModel::Output ro = model.spatial->forward(clip.frames[r]);
              refs.push_back({std::move(ro.memory), std::move(ro.poses)});
            }
          }
          temporal_loss(loss, model, clip, t, ref_idx, key, refs, rng);
        }
        tape().backward(loss.total);
      }
      stats.loss += loss.total.item();
      stats.keypoint += loss.keypoint;
      stats.classification += loss.classification;
      stats.instance += loss.instance;
      if (++in_batch == batch || s + 1 == samples.size()) {
        optimizer.step(1.0 / static_cast<double>(in_batch));
        in_batch = 0;
        ++stats.steps;
      }
    }
    const double n = static_cast<double>(std::max<std::size_t>(samples.size(), 1));
    stats.loss /= n;
    stats.keypoint /= n;
    stats.classification /= n;
    stats.instance /= n;
    history.push_back(stats);
    if (options.log) {
      write_epoch(*options.log, mode, stats);
      if (options.eval) {
        const EvalMode em = mode == TrainMode::kSpatial ? EvalMode::kSpatial : EvalMode::kTemporal;
        const EvalReport r = evaluate(model, *options.eval, em);
        *options.log << "eval epoch " << epoch << " mode "
                     << (em == EvalMode::kSpatial ? "spatial" : "temporal") << " ap "
                     << std::fixed << std::setprecision(9) << r.mean_ap << '\n';
        options.log->unsetf(std::ios::floatfield);
      }
      options.log->flush();
    }
  }
  model.params.set_trainable("spatial.", true);
  model.params.set_trainable("temporal.", true);
  model.params.zero_grad();
  return history;
}

}  // namespace vepe
