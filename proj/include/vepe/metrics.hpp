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

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vepe/annotation.hpp"
#include "vepe/skeleton.hpp"

namespace vepe {

struct PosePrediction {
  std::vector<double> keypoints;  // K_j (x, y) pairs, normalized
  double score = 0.0;
};

struct EvalReport {
  std::array<double, kNumJoints> joint_ap{};
  double mean_ap = 0.0;
  double tau = 0.1;
  std::size_t instances = 0;
  std::size_t frames = 0;
  std::size_t clips = 0;

  double group_ap(std::size_t group) const;
  // Header, counts, one row of joint-group columns in percent, per-joint APs.
  std::string to_text() const;
  bool operator==(const EvalReport&) const = default;
};

// Instance gate on the scale-normalized mean joint distance.
inline constexpr double kMatchGate = 0.5;

// Bounding-box diagonal of the visible joints; 0 when none are visible.
double person_scale(const PersonAnnotation& gt);

// Per frame f: predictions[f] against ground_truth[f].
EvalReport compute_ap(std::span<const std::vector<PosePrediction>> predictions,
                      std::span<const std::vector<PersonAnnotation>> ground_truth,
                      double tau = 0.1, std::size_t clips = 0);

// All-point interpolated AP over (score, is_true_positive) entries, with
// equal scores ranked as one group.
double average_precision(std::vector<std::pair<double, bool>> entries, std::size_t positives);

struct TimingRow {
  std::size_t instances = 0;
  std::size_t repeats = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

struct TimingTable {
  std::vector<TimingRow> rows;
  // Largest median over smallest median.
  double ratio() const;
  std::string to_csv() const;
};

// forward(count) runs one keyframe forward pass on a prepared input with
// `count` rendered persons.
TimingTable runtime_probe(const std::function<void(std::size_t)>& forward,
                          std::span<const std::size_t> instance_counts, std::size_t repeats,
                          std::size_t warmup = 1);

}  // namespace vepe
