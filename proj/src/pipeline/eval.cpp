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
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "vepe/pipeline.hpp"

namespace vepe {

namespace {

std::vector<FrameState> gather_refs(const std::vector<FrameState>& states, std::size_t t,
                                    std::size_t frames) {
  std::vector<FrameState> refs;
  for (std::size_t r : reference_frames(t, states.size(), frames)) refs.push_back(states[r]);
  return refs;
}

std::vector<PosePrediction> spatial_predictions(const SpatialPoseSet& poses) {
  const std::size_t k2 = poses.keypoints.numel() / std::max<std::size_t>(poses.size(), 1);
  std::vector<PosePrediction> out;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto row = poses.keypoints.data().subspan(i * k2, k2);
    out.push_back({{row.begin(), row.end()}, poses.scores[i]});
  }
  return out;
}

std::vector<PosePrediction> temporal_predictions(const TemporalOutput& out) {
  const Tensor& kps = out.result.layer_keypoints.back();
  const std::size_t n = out.result.scores.size();
  const std::size_t k2 = n ? kps.numel() / n : 0;
  std::vector<PosePrediction> preds;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = kps.data().subspan(i * k2, k2);
    preds.push_back({{row.begin(), row.end()}, out.result.scores[i]});
  }
  return preds;
}


void paint(Tensor& image, long x, long y, const std::array<double, 3>& rgb) {
  const long h = static_cast<long>(image.dim(0)), w = static_cast<long>(image.dim(1));
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  double* px = image.ptr_mut() + (static_cast<std::size_t>(y) * image.dim(1) +
                                  static_cast<std::size_t>(x)) * 3;
  for (int c = 0; c < 3; ++c) px[c] = rgb[c];
}

}  // namespace

void check_joints(const VepeModel& model, const Dataset& data) {
  for (const VideoClip& clip : data.clips) {
    for (const auto& frame : clip.annotations) {
      for (const PersonAnnotation& p : frame) {
        if (p.joints() != model.config.spatial.joints) {
          throw ConfigError("joint-count mismatch: clip " + clip.clip_id + " has " +
                            std::to_string(p.joints()) + " joints, model expects " +
                            std::to_string(model.config.spatial.joints));
        }
      }
    }
  }
}

ClipPredictions predict(const VepeModel& model, const Dataset& data,
                        const std::vector<std::vector<FrameState>>& cache, EvalMode mode) {
  NoGradGuard no_grad;
  check_joints(model, data);
  ClipPredictions out;
  const std::size_t frames = model.config.spatial.attention.frames;
  for (std::size_t c = 0; c < data.clips.size(); ++c) {
    const auto& states = cache.at(c);
    for (std::size_t t = 0; t < states.size(); ++t) {
      out.ground_truth.push_back(data.clips[c].annotations[t]);
      if (mode == EvalMode::kSpatial) {
        out.frames.push_back(spatial_predictions(states[t].poses));
        out.retained += states[t].poses.size();
        continue;
      }
      const auto refs = gather_refs(states, t, frames);
      const TemporalOutput res = model.temporal->forward(states[t], refs);
      out.retained += res.key_selection.size();
      out.frames.push_back(temporal_predictions(res));
    }
  }
  return out;
}

EvalReport evaluate(const VepeModel& model, const Dataset& data, EvalMode mode) {
  check_joints(model, data);
  const auto cache = cache_frames(model, data);
  const ClipPredictions p = predict(model, data, cache, mode);
  return compute_ap(p.frames, p.ground_truth, model.config.tau, data.clips.size());
}

std::vector<SweepRow> sweep_threshold(VepeModel& model, const Dataset& data,
                                      const std::vector<double>& thresholds) {
  check_joints(model, data);
  const auto cache = cache_frames(model, data);
  const double saved = model.temporal->config().threshold;
  std::vector<SweepRow> rows;
  for (double thr : thresholds) {
    model.temporal->mutable_config().threshold = thr;
    const ClipPredictions p = predict(model, data, cache, EvalMode::kTemporal);
    const EvalReport r = compute_ap(p.frames, p.ground_truth, model.config.tau, data.clips.size());
    rows.push_back({thr, r.mean_ap, p.retained});
  }
  model.temporal->mutable_config().threshold = saved;
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "VEPE-SWEEP-1\nthreshold mAP(%) retained\n";
  for (const SweepRow& r : rows) {
    os << std::defaultfloat << r.threshold << ' ' << std::fixed << std::setprecision(2)
       << 100.0 * r.mean_ap << ' ' << r.retained << '\n';
    os << std::setprecision(6);
  }
  return os.str();
}

TrackingStats tracking_agreement(const VepeModel& model, const Dataset& data) {
  if (!model.config.temporal.use_icm) {
    throw ConfigError("tracking agreement needs instance queries (use_icm)");
  }
  NoGradGuard no_grad;
  const auto cache = cache_frames(model, data);
  const TemporalConfig& tc = model.temporal->config();
  TrackingStats stats;
  for (std::size_t c = 0; c < data.clips.size(); ++c) {
    const auto& states = cache[c];
    const auto& ann = data.clips[c].annotations;
    for (std::size_t t = 0; t + 1 < states.size(); ++t) {
      const auto key_sel = pose_query_selection(states[t].poses.scores, tc.threshold, tc.min_keep);
      const auto ref_sel =
          pose_query_selection(states[t + 1].poses.scores, tc.threshold, tc.min_keep);
      const InstanceQuerySet key = model.temporal->instance_queries(states[t], key_sel);
      const InstanceQuerySet ref = model.temporal->instance_queries(states[t + 1], ref_sel);
      const InstanceMask mask = compute_instance_mask(key, std::span(&ref, 1));

      const auto key_gt = visible_persons(ann[t]);
      const auto ref_gt = visible_persons(ann[t + 1]);
      const MatchAssignment ka = match_selection(states[t].poses, key_sel, key_gt, model.config.loss);
      const MatchAssignment ra =
          match_selection(states[t + 1].poses, ref_sel, ref_gt, model.config.loss);
      std::map<std::int64_t, std::size_t> ref_row_of_track;
      for (const auto& [row, g] : ra.pairs) ref_row_of_track[ref_gt[g].track_id] = row;
      for (const auto& [row, g] : ka.pairs) {
        const auto it = ref_row_of_track.find(key_gt[g].track_id);
        if (it == ref_row_of_track.end()) continue;
        ++stats.total;
        stats.agreed += mask.link(0, row) == it->second;
      }
    }
  }
  return stats;
}

Tensor render_overlay(const Tensor& frame, const std::vector<PosePrediction>& poses,
                      double min_score) {
  Tensor image = frame.detach();
  const double h = static_cast<double>(image.dim(0)), w = static_cast<double>(image.dim(1));
  auto pixel = [&](const PosePrediction& p, std::size_t j) {
    return std::pair<double, double>{p.keypoints[2 * j] * w - 0.5, p.keypoints[2 * j + 1] * h - 0.5};
  };
  for (const PosePrediction& p : poses) {
    if (p.score < min_score) continue;
    for (const auto& [a, b] : kLimbs) {
      const auto [xa, ya] = pixel(p, a);
      const auto [xb, yb] = pixel(p, b);
      const double len = std::hypot(xb - xa, yb - ya);
      const int steps = std::max(1, static_cast<int>(std::ceil(2.0 * len)));
      for (int s = 0; s <= steps; ++s) {
        const double f = static_cast<double>(s) / steps;
        paint(image, std::lround(xa + f * (xb - xa)), std::lround(ya + f * (yb - ya)),
              {1.0, 1.0, 1.0});
      }
    }
  }
  for (const PosePrediction& p : poses) {
    if (p.score < min_score) continue;
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const auto [x, y] = pixel(p, j);
      paint(image, std::lround(x), std::lround(y), joint_color(j));
    }
  }
  return image;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::string bytes(image.numel(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<char>(std::lround(std::clamp(image.at(i), 0.0, 1.0) * 255.0));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_inference(const VepeModel& model, const VideoClip& clip,
                     const std::filesystem::path& out_dir, double min_score) {
  NoGradGuard no_grad;
  std::filesystem::create_directories(out_dir);
  Dataset one;
  one.clips.push_back(clip);
  check_joints(model, one);
  const auto states = cache_frames(model, one)[0];
  const std::size_t frames = model.config.spatial.attention.frames;
  const TemporalConfig& tc = model.temporal->config();

  std::ofstream poses(out_dir / "poses.txt");
  poses << "VEPE-POSES-1\nclip " << clip.clip_id << "\nframes " << states.size() << '\n';
  poses << std::setprecision(17);
  std::vector<std::int64_t> ids;
  std::int64_t next_id = 0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const TemporalOutput res = model.temporal->forward(states[t], gather_refs(states, t, frames));
    const auto preds = temporal_predictions(res);
    if (t == 0) {
      for (std::size_t i = 0; i < preds.size(); ++i) ids.push_back(next_id++);
    }
    std::ostringstream name;
    name << "frame-" << std::setw(4) << std::setfill('0') << t << ".ppm";
    write_ppm(render_overlay(clip.frames[t], preds, min_score), out_dir / name.str());

    poses << "frame " << t << ' ' << preds.size() << '\n';
    for (std::size_t i = 0; i < preds.size(); ++i) {
      poses << "pose " << i << " id " << ids[i] << " query " << res.key_selection[i] << " score "
            << preds[i].score;
      for (double v : preds[i].keypoints) poses << ' ' << v;
      poses << '\n';
    }
    if (t + 1 == states.size()) break;

    const auto next_sel =
        pose_query_selection(states[t + 1].poses.scores, tc.threshold, tc.min_keep);
    std::vector<std::int64_t> next_ids(next_sel.size(), -1);
    if (tc.use_icm) {
      const InstanceQuerySet key = model.temporal->instance_queries(states[t], res.key_selection);
      const InstanceQuerySet ref = model.temporal->instance_queries(states[t + 1], next_sel);
      const InstanceMask mask = compute_instance_mask(key, std::span(&ref, 1));
      for (std::size_t i = 0; i < preds.size(); ++i) {
        const std::size_t j = mask.link(0, i);
        if (j >= next_sel.size()) continue;
        poses << "link " << t << ' ' << i << ' ' << j << ' ' << mask.similarity[0][i * next_sel.size() + j]
              << '\n';
        if (next_ids[j] < 0) next_ids[j] = ids[i];
      }
    }
    for (auto& id : next_ids) {
      if (id < 0) id = next_id++;
    }
    ids = std::move(next_ids);
  }
  if (!poses) throw std::runtime_error("cannot write " + (out_dir / "poses.txt").string());
}

}  // namespace vepe
