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

#include "vepe/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vepe {

double EvalReport::group_ap(std::size_t group) const {
  const JointGroup& g = kJointGroups.at(group);
  double s = 0.0;
  for (std::size_t i = 0; i < g.count; ++i) s += joint_ap[g.joints[i]];
  return s / static_cast<double>(g.count);
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "VEPE-EVAL-1\n";
  os << "tau " << tau << '\n';
  os << "clips " << clips << '\n';
  os << "frames " << frames << '\n';
  os << "instances " << instances << '\n';
  os << "columns";
  for (const JointGroup& g : kJointGroups) os << ' ' << g.name;
  os << " Mean\n";
  os << "ap" << std::fixed << std::setprecision(2);
  for (std::size_t g = 0; g < kJointGroups.size(); ++g) os << ' ' << 100.0 * group_ap(g);
  os << ' ' << 100.0 * mean_ap << '\n';
  os << std::setprecision(6);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    os << "joint " << kJointNames[j] << ' ' << joint_ap[j] << '\n';
  }
  return os.str();
}

double person_scale(const PersonAnnotation& gt) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  bool any = false;
  for (std::size_t j = 0; j < gt.joints(); ++j) {
    if (!gt.visible[j]) continue;
    any = true;
    x0 = std::min(x0, gt.keypoints[2 * j]);
    x1 = std::max(x1, gt.keypoints[2 * j]);
    y0 = std::min(y0, gt.keypoints[2 * j + 1]);
    y1 = std::max(y1, gt.keypoints[2 * j + 1]);
  }
  return any ? std::hypot(x1 - x0, y1 - y0) : 0.0;
}

double average_precision(std::vector<std::pair<double, bool>> entries, std::size_t positives) {
  if (positives == 0 || entries.empty()) return 0.0;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    while (j < entries.size() && entries[j].first == entries[i].first) {
      tp += entries[j].second;
      ++j;
    }
    seen = j;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    i = j;
  }
  double ap = 0.0, best = 0.0;
  for (std::size_t k = precision.size(); k-- > 0;) {
    best = std::max(best, precision[k]);
    const double prev = k ? recall[k - 1] : 0.0;
    ap += (recall[k] - prev) * best;
  }
  return ap;
}

EvalReport compute_ap(std::span<const std::vector<PosePrediction>> predictions,
                      std::span<const std::vector<PersonAnnotation>> ground_truth, double tau,
                      std::size_t clips) {
  if (!(tau > 0.0)) throw std::invalid_argument("compute_ap: tau must be positive");
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("compute_ap: " + std::to_string(predictions.size()) +
                                " prediction frames for " +
                                std::to_string(ground_truth.size()) + " annotated frames");
  }
  EvalReport report;
  report.tau = tau;
  report.frames = ground_truth.size();
  report.clips = clips;
  std::array<std::vector<std::pair<double, bool>>, kNumJoints> entries;
  std::array<std::size_t, kNumJoints> positives{};

  for (std::size_t f = 0; f < ground_truth.size(); ++f) {
    std::vector<const PersonAnnotation*> gts;
    std::vector<double> scales;
    for (const PersonAnnotation& g : ground_truth[f]) {
      if (g.visible_count() == 0) continue;
      gts.push_back(&g);
      scales.push_back(person_scale(g));
      for (std::size_t j = 0; j < kNumJoints && j < g.joints(); ++j) positives[j] += g.visible[j];
    }
    report.instances += gts.size();

    const auto& preds = predictions[f];
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds[a].score > preds[b].score;
    });
    std::vector<char> taken(gts.size(), 0);
    for (std::size_t idx : order) {
      const PosePrediction& p = preds[idx];
      std::size_t best = gts.size();
      double best_dist = 0.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g]) continue;
        double total = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < gts[g]->joints(); ++j) {
          if (!gts[g]->visible[j]) continue;
          total += std::hypot(p.keypoints[2 * j] - gts[g]->keypoints[2 * j],
                              p.keypoints[2 * j + 1] - gts[g]->keypoints[2 * j + 1]);
          ++n;
        }
        const double dist = total / static_cast<double>(n) / std::max(scales[g], 1e-12);
        if (best == gts.size() || dist < best_dist) {
          best = g;
          best_dist = dist;
        }
      }
      if (best < gts.size() && best_dist <= kMatchGate) {
        taken[best] = 1;
        const PersonAnnotation& g = *gts[best];
        for (std::size_t j = 0; j < kNumJoints; ++j) {
          if (!g.visible[j]) continue;
          const double d = std::hypot(p.keypoints[2 * j] - g.keypoints[2 * j],
                                      p.keypoints[2 * j + 1] - g.keypoints[2 * j + 1]);
          entries[j].emplace_back(p.score, d <= tau * scales[best]);
        }
      } else {
        for (std::size_t j = 0; j < kNumJoints; ++j) entries[j].emplace_back(p.score, false);
      }
    }
  }
  double total = 0.0;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    report.joint_ap[j] = average_precision(std::move(entries[j]), positives[j]);
    total += report.joint_ap[j];
  }
  report.mean_ap = total / static_cast<double>(kNumJoints);
  return report;
}

double TimingTable::ratio() const {
  if (rows.empty()) return 1.0;
  double lo = rows[0].median_ms, hi = rows[0].median_ms;
  for (const TimingRow& r : rows) {
    lo = std::min(lo, r.median_ms);
    hi = std::max(hi, r.median_ms);
  }
  return lo > 0.0 ? hi / lo : 1.0;
}

std::string TimingTable::to_csv() const {
  std::ostringstream os;
  os << "instances,repeats,median_ms,min_ms,max_ms\n" << std::fixed << std::setprecision(3);
  for (const TimingRow& r : rows) {
    os << r.instances << ',' << r.repeats << ',' << r.median_ms << ',' << r.min_ms << ','
       << r.max_ms << '\n';
  }
  return os.str();
}

TimingTable runtime_probe(const std::function<void(std::size_t)>& forward,
                          std::span<const std::size_t> instance_counts, std::size_t repeats,
                          std::size_t warmup) {
  if (repeats == 0) throw std::invalid_argument("runtime_probe: repeats must be >= 1");
  TimingTable table;
  for (std::size_t count : instance_counts) {
    for (std::size_t i = 0; i < warmup; ++i) forward(count);
    std::vector<double> ms;
    for (std::size_t i = 0; i < repeats; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      forward(count);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const std::size_t n = ms.size();
    const double median = n % 2 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    table.rows.push_back({count, repeats, median, ms.front(), ms.back()});
  }
  return table;
}

}  // namespace vepe
