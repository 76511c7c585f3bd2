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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "vepe/matching.hpp"
#include "vepe/metrics.hpp"
#include "vepe/synth.hpp"
#include "vepe/temporal.hpp"

namespace vepe {

struct OptimizerConfig {
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.1;  // global norm, 0 disables
  std::size_t batch = 8;
  std::size_t epochs = 20;
  bool operator==(const OptimizerConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 7;
  SpatialConfig spatial;
  TemporalConfig temporal;
  SynthConfig synth;
  LossWeights loss;
  double margin = 0.3;
  double tau = 0.1;
  OptimizerConfig optimizer;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Throws ConfigError when a RunConfig default drifts from the reference
// training setup.
void check_reference_defaults();

// Decoupled weight decay Adam over the trainable entries of a ParameterSet.
class AdamW {
 public:
  AdamW(ParameterSet& params, const OptimizerConfig& config);
  // Applies accumulated gradients scaled by grad_scale, then clears them.
  void step(double grad_scale = 1.0);
  std::size_t steps() const { return steps_; }
  double last_grad_norm() const { return last_norm_; }

 private:
  ParameterSet& params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
  double last_norm_ = 0.0;
};

struct ManifestEntry {
  std::string file;
  std::uint64_t seed = 0;
  std::string split;
};

struct Dataset {
  std::vector<VideoClip> clips;
  std::vector<ManifestEntry> entries;
  std::size_t frame_count() const;
};

// Writes count clips round-robin over splits plus manifest.json.
std::vector<ManifestEntry> generate_dataset(const std::filesystem::path& dir,
                                            const SynthConfig& base,
                                            const std::vector<Split>& splits,
                                            std::size_t count, std::uint64_t seed);
Dataset load_dataset(const std::filesystem::path& dir);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t clip_seed(std::uint64_t base, std::size_t index);

// Spatial and temporal stages sharing one parameter set.
class VepeModel {
 public:
  explicit VepeModel(const RunConfig& config);
  VepeModel(const VepeModel&) = delete;
  VepeModel& operator=(const VepeModel&) = delete;

  RunConfig config;
  ParameterSet params;
  std::unique_ptr<SpatialModel> spatial;
  std::unique_ptr<TemporalModel> temporal;
};

// Loads only entries whose name starts with prefix; every such parameter
// must be present.
void load_checkpoint_prefix(const std::filesystem::path& path, ParameterSet& params,
                            const std::string& prefix);

enum class TrainMode { kSpatial, kTemporal, kJoint };
TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double keypoint = 0.0;
  double classification = 0.0;
  double instance = 0.0;
  std::size_t steps = 0;
};

// Neighbours of frame t in a clip of n frames, substituting the keyframe at
// the clip boundaries: {t-1, t+1}, count = frames - 1.
std::vector<std::size_t> reference_frames(std::size_t t, std::size_t n, std::size_t frames);

// Deep-supervised set-prediction loss over every layer.
struct SetLoss {
  Tensor keypoint, classification;
};
SetLoss set_prediction_loss(const std::vector<Tensor>& layer_keypoints,
                            const std::vector<Tensor>& layer_logits,
                            std::span<const PersonAnnotation> gt, const LossWeights& weights);

// Annotated persons with at least one visible joint.
std::vector<PersonAnnotation> visible_persons(std::span<const PersonAnnotation> gt);
// Hungarian assignment of the selected spatial predictions of one frame.
MatchAssignment match_selection(const SpatialPoseSet& poses, const QuerySelection& selection,
                                std::span<const PersonAnnotation> targets,
                                const LossWeights& weights);

// Throws ConfigError when an annotation's joint count differs from the model.
void check_joints(const VepeModel& model, const Dataset& data);

// Runs the spatial stage without gradients for every frame.
std::vector<std::vector<FrameState>> cache_frames(const VepeModel& model, const Dataset& data);

struct TrainOptions {
  std::ostream* log = nullptr;
  // Evaluated after every epoch when set.
  const Dataset* eval = nullptr;
  // Reuses cached spatial outputs in temporal mode; computed when empty.
  const std::vector<std::vector<FrameState>>* cache = nullptr;
};

std::vector<EpochStats> train(VepeModel& model, const Dataset& data, TrainMode mode,
                              const TrainOptions& options = {});

enum class EvalMode { kSpatial, kTemporal };
EvalMode parse_eval_mode(const std::string& name);

struct ClipPredictions {
  std::vector<std::vector<PosePrediction>> frames;
  std::vector<std::vector<PersonAnnotation>> ground_truth;
  std::size_t retained = 0;  // kept key queries over all frames
};

ClipPredictions predict(const VepeModel& model, const Dataset& data,
                        const std::vector<std::vector<FrameState>>& cache, EvalMode mode);
EvalReport evaluate(const VepeModel& model, const Dataset& data, EvalMode mode);

struct SweepRow {
  double threshold = 0.0;
  double mean_ap = 0.0;
  std::size_t retained = 0;
};
std::vector<SweepRow> sweep_threshold(VepeModel& model, const Dataset& data,
                                      const std::vector<double>& thresholds);
std::string sweep_table(const std::vector<SweepRow>& rows);

struct TrackingStats {
  std::size_t agreed = 0;
  std::size_t total = 0;
  double rate() const { return total ? static_cast<double>(agreed) / static_cast<double>(total) : 0.0; }
};
// Instance-mask argmax links between adjacent frames against ground-truth
// track identity of the matched instances.
TrackingStats tracking_agreement(const VepeModel& model, const Dataset& data);

// Writes per-frame overlay images (binary PPM) and a pose file.
void write_inference(const VepeModel& model, const VideoClip& clip,
                     const std::filesystem::path& out_dir, double min_score = 0.5);
void write_ppm(const Tensor& image, const std::filesystem::path& path);
// Draws predicted skeletons over a frame copy.
Tensor render_overlay(const Tensor& frame, const std::vector<PosePrediction>& poses,
                      double min_score);

bool deterministic_mode();

}  // namespace vepe
