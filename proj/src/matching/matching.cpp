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

#include "vepe/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vepe {

namespace {

// Rows <= cols. Returns col_of_row.
std::vector<std::size_t> solve(const std::vector<double>& a, std::size_t n, std::size_t m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = j - 1;
  }
  return col_of_row;
}

}  // namespace

MatchAssignment hungarian_match(std::span<const double> cost, std::size_t predictions,
                                std::size_t ground_truth) {
  if (cost.size() != predictions * ground_truth) {
    throw ShapeError("hungarian_match: cost has " + std::to_string(cost.size()) +
                     " entries for a " + std::to_string(predictions) + "x" +
                     std::to_string(ground_truth) + " matrix");
  }
  for (double c : cost) {
    if (!std::isfinite(c)) throw std::invalid_argument("hungarian_match: non-finite cost");
  }
  MatchAssignment out;
  std::vector<std::size_t> gt_of_pred(predictions, ground_truth);
  if (predictions > 0 && ground_truth > 0) {
    if (predictions <= ground_truth) {
      const auto cols = solve({cost.begin(), cost.end()}, predictions, ground_truth);
      for (std::size_t i = 0; i < predictions; ++i) gt_of_pred[i] = cols[i];
    } else {
      std::vector<double> t(cost.size());
      for (std::size_t i = 0; i < predictions; ++i) {
        for (std::size_t g = 0; g < ground_truth; ++g) {
          t[g * predictions + i] = cost[i * ground_truth + g];
        }
      }
      const auto cols = solve(t, ground_truth, predictions);
      for (std::size_t g = 0; g < ground_truth; ++g) gt_of_pred[cols[g]] = g;
    }
  }
  for (std::size_t i = 0; i < predictions; ++i) {
    if (gt_of_pred[i] < ground_truth) {
      out.pairs.emplace_back(i, gt_of_pred[i]);
      out.total_cost += cost[i * ground_truth + gt_of_pred[i]];
    } else {
      out.unmatched.push_back(i);
    }
  }
  return out;
}

double mean_visible_l1(std::span<const double> keypoints, const PersonAnnotation& gt) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < gt.joints(); ++j) {
    if (!gt.visible[j]) continue;
    total += std::fabs(keypoints[2 * j] - gt.keypoints[2 * j]) +
             std::fabs(keypoints[2 * j + 1] - gt.keypoints[2 * j + 1]);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double match_cost(std::span<const double> keypoints, double score,
                  const PersonAnnotation& gt, const LossWeights& weights) {
  const double s = std::clamp(score, 1e-12, 1.0);
  return weights.keypoint * mean_visible_l1(keypoints, gt) -
         weights.classification * std::log(s);
}

std::vector<double> match_cost_matrix(const Tensor& keypoints, std::span<const double> scores,
                                      std::span<const PersonAnnotation> gt,
                                      const LossWeights& weights) {
  const std::size_t n = keypoints.dim(0);
  const std::size_t stride = keypoints.numel() / std::max<std::size_t>(n, 1);
  std::vector<double> cost(n * gt.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> row(keypoints.ptr() + i * stride, stride);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      cost[i * gt.size() + g] = match_cost(row, scores[i], gt[g], weights);
    }
  }
  return cost;
}

Tensor keypoint_loss(const Tensor& keypoints, const MatchAssignment& assignment,
                     std::span<const PersonAnnotation> gt) {
  const std::size_t n = keypoints.dim(0);
  const std::size_t stride = keypoints.numel() / std::max<std::size_t>(n, 1);
  std::vector<std::size_t> rows;
  std::vector<double> target, mask;
  std::size_t visible = 0;
  for (const auto& [pred, g] : assignment.pairs) {
    const PersonAnnotation& a = gt[g];
    if (a.visible_count() == 0) continue;
    rows.push_back(pred);
    for (std::size_t j = 0; j < a.joints(); ++j) {
      const double on = a.visible[j] ? 1.0 : 0.0;
      target.push_back(a.keypoints[2 * j]);
      target.push_back(a.keypoints[2 * j + 1]);
      mask.push_back(on);
      mask.push_back(on);
      visible += a.visible[j] != 0;
    }
  }
  if (visible == 0) return Tensor::scalar(0.0);
  const Tensor picked = gather_rows(reshape(keypoints, {n, stride}), rows);
  const Tensor diff = sub(picked, Tensor({rows.size(), stride}, std::move(target)));
  return scale(sum(mul_const(abs(diff), mask)), 1.0 / static_cast<double>(visible));
}

Tensor classification_loss(const Tensor& logits, const MatchAssignment& assignment) {
  std::vector<double> targets(logits.numel(), 0.0);
  for (const auto& pair : assignment.pairs) targets[pair.first] = 1.0;
  return bce_with_logits(logits, targets);
}

TripletBatch build_triplets(std::span<const MatchAssignment> assignments,
                            std::span<const std::vector<std::int64_t>> track_ids,
                            std::span<const Tensor> embeddings, Rng& rng, double margin) {
  if (assignments.size() != track_ids.size() || assignments.size() != embeddings.size()) {
    throw ShapeError("build_triplets: per-frame inputs differ in length");
  }
  struct Member {
    std::size_t frame, row;
    std::int64_t track;
  };
  std::vector<Member> members;
  for (std::size_t f = 0; f < assignments.size(); ++f) {
    for (const auto& [row, g] : assignments[f].pairs) {
      members.push_back({f, row, track_ids[f].at(g)});
    }
  }
  TripletBatch batch;
  batch.margin = margin;
  std::vector<std::size_t> pos, neg;
  for (const Member& a : members) {
    pos.clear();
    neg.clear();
    for (std::size_t i = 0; i < members.size(); ++i) {
      const Member& m = members[i];
      if (m.track == a.track && m.frame != a.frame) pos.push_back(i);
      if (m.track != a.track) neg.push_back(i);
    }
    if (pos.empty() || neg.empty()) continue;
    const Member& p = members[pos[rng.index(pos.size())]];
    const Member& n = members[neg[rng.index(neg.size())]];
    batch.triplets.push_back({a.frame, a.row, p.frame, p.row, n.frame, n.row});
  }
  if (batch.triplets.empty()) return batch;

  auto collect = [&](auto frame_of, auto row_of) {
    std::vector<Tensor> rows;
    for (const Triplet& t : batch.triplets) {
      const std::size_t r = row_of(t);
      rows.push_back(slice_rows(embeddings[frame_of(t)], r, r + 1));
    }
    return concat_rows(rows);
  };
  batch.anchors = collect([](const Triplet& t) { return t.anchor_frame; },
                          [](const Triplet& t) { return t.anchor_row; });
  batch.positives = collect([](const Triplet& t) { return t.positive_frame; },
                            [](const Triplet& t) { return t.positive_row; });
  batch.negatives = collect([](const Triplet& t) { return t.negative_frame; },
                            [](const Triplet& t) { return t.negative_row; });
  return batch;
}

Tensor instance_consistency_loss(const TripletBatch& batch) {
  if (batch.empty()) return Tensor::scalar(0.0);
  const Tensor cos_ap = cosine_similarity_rows(batch.anchors, batch.positives);
  const Tensor cos_an = cosine_similarity_rows(batch.anchors, batch.negatives);
  // d(a,p) - d(a,n) = cos(a,n) - cos(a,p)
  return mean(relu(add_scalar(sub(cos_an, cos_ap), batch.margin)));
}

Tensor total_loss(const LossComponents& parts, const LossWeights& weights) {
  Tensor total = Tensor::scalar(0.0);
  if (parts.keypoint.defined()) total = add(total, scale(parts.keypoint, weights.keypoint));
  if (parts.classification.defined()) {
    total = add(total, scale(parts.classification, weights.classification));
  }
  if (parts.instance.defined() && weights.instance != 0.0) {
    total = add(total, scale(parts.instance, weights.instance));
  }
  return total;
}

}  // namespace vepe
