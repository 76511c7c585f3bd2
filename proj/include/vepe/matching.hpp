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

#include <span>
#include <utility>
#include <vector>

#include "vepe/annotation.hpp"
#include "vepe/ops.hpp"
#include "vepe/rng.hpp"

namespace vepe {

struct MatchAssignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (prediction, gt), by prediction
  std::vector<std::size_t> unmatched;
  double total_cost = 0.0;
};

// Minimum-cost injective assignment of a row-major [P x G] cost matrix.
MatchAssignment hungarian_match(std::span<const double> cost, std::size_t predictions,
                                std::size_t ground_truth);

struct LossWeights {
  double keypoint = 5.0;
  double classification = 2.0;
  double instance = 1.0;
  bool operator==(const LossWeights&) const = default;
};

// Mean over visible joints of |dx| + |dy|; 0 when no joint is visible.
double mean_visible_l1(std::span<const double> keypoints, const PersonAnnotation& gt);

// keypoint * mean_visible_l1 + classification * (-log score).
double match_cost(std::span<const double> keypoints, double score,
                  const PersonAnnotation& gt, const LossWeights& weights = {});

// keypoints [N x K x 2]; returns row-major [N x G].
std::vector<double> match_cost_matrix(const Tensor& keypoints, std::span<const double> scores,
                                      std::span<const PersonAnnotation> gt,
                                      const LossWeights& weights = {});

// L1 summed over visible joints of matched pairs divided by their count.
Tensor keypoint_loss(const Tensor& keypoints, const MatchAssignment& assignment,
                     std::span<const PersonAnnotation> gt);
// Mean BCE: matched -> 1, unmatched -> 0.
Tensor classification_loss(const Tensor& logits, const MatchAssignment& assignment);

struct Triplet {
  std::size_t anchor_frame, anchor_row;
  std::size_t positive_frame, positive_row;
  std::size_t negative_frame, negative_row;
  bool operator==(const Triplet&) const = default;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  Tensor anchors, positives, negatives;  // [B x d], undefined when empty
  double margin = 0.3;
  bool empty() const { return triplets.empty(); }
};

// Per frame f: assignments[f] pairs instance rows with gt indices,
// track_ids[f][g] is the track of gt g, embeddings[f] holds instance rows.
TripletBatch build_triplets(std::span<const MatchAssignment> assignments,
                            std::span<const std::vector<std::int64_t>> track_ids,
                            std::span<const Tensor> embeddings, Rng& rng,
                            double margin = 0.3);

// Mean of max(0, d(a,p) - d(a,n) + margin) with d = 1 - cosine.
Tensor instance_consistency_loss(const TripletBatch& batch);

struct LossComponents {
  Tensor keypoint, classification, instance;  // undefined terms count as 0
};

Tensor total_loss(const LossComponents& parts, const LossWeights& weights = {});

}  // namespace vepe
