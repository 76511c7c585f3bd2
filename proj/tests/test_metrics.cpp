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

#include <chrono>
#include <set>

#include "common.hpp"
#include "vepe/metrics.hpp"

using namespace vepe;

namespace {

PersonAnnotation make_person(double cx, double cy, double size, Rng& rng, double p_visible = 1.0) {
  PersonAnnotation a;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    a.keypoints.push_back(cx + size * (rng.uniform() - 0.5));
    a.keypoints.push_back(cy + size * (rng.uniform() - 0.5));
    a.visible.push_back(rng.bernoulli(p_visible) ? 1 : 0);
  }
  return a;
}

PosePrediction noisy(const PersonAnnotation& gt, double noise, double score, Rng& rng) {
  PosePrediction p{gt.keypoints, score};
  for (double& v : p.keypoints) v += noise * rng.normal();
  return p;
}

// Area under the interpolated PR curve, from an exhaustive sweep over every
// score threshold.
double sweep_oracle(const std::vector<std::pair<double, bool>>& entries, std::size_t positives) {
  if (positives == 0) return 0.0;
  std::set<double> thresholds;
  for (const auto& e : entries) thresholds.insert(e.first);
  std::vector<std::pair<double, double>> curve;  // (recall, precision)
  for (double t : thresholds) {
    std::size_t kept = 0, tp = 0;
    for (const auto& e : entries) {
      if (e.first >= t) {
        ++kept;
        tp += e.second;
      }
    }
    curve.emplace_back(static_cast<double>(tp) / static_cast<double>(positives),
                       static_cast<double>(tp) / static_cast<double>(kept));
  }
  std::set<double> levels{0.0};
  for (const auto& c : curve) levels.insert(c.first);
  double area = 0.0, prev = 0.0;
  for (double r : levels) {
    if (r == 0.0) continue;
    double best = 0.0;
    for (const auto& c : curve) {
      if (c.first >= r) best = std::max(best, c.second);
    }
    area += (r - prev) * best;
    prev = r;
  }
  return area;
}

}  // namespace

TEST_CASE("a perfect predictor scores one and an empty predictor zero") {
  Rng rng(1);
  std::vector<std::vector<PersonAnnotation>> gt(3);
  std::vector<std::vector<PosePrediction>> perfect(3), none(3);
  for (std::size_t f = 0; f < 3; ++f) {
    for (std::size_t i = 0; i < 3; ++i) {
      gt[f].push_back(make_person(0.2 + 0.3 * static_cast<double>(i), 0.5, 0.2, rng));
      perfect[f].push_back({gt[f].back().keypoints, 1.0});
    }
  }
  const EvalReport r = compute_ap(perfect, gt, 0.1, 1);
  for (double ap : r.joint_ap) CHECK(ap == 1.0);
  CHECK(r.mean_ap == 1.0);
  CHECK(r.instances == 9);
  CHECK(r.frames == 3);
  const EvalReport e = compute_ap(none, gt);
  for (double ap : e.joint_ap) CHECK(ap == 0.0);
  CHECK(e.mean_ap == 0.0);
  CHECK_THROWS(compute_ap(none, gt, 0.0));
  CHECK_THROWS(compute_ap(std::vector<std::vector<PosePrediction>>(2), gt));
}

TEST_CASE("average precision against an exhaustive threshold sweep") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::pair<double, bool>> entries;
    const std::size_t n = 1 + rng.index(12);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores produce ties.
      entries.emplace_back(static_cast<double>(rng.index(5)) / 4.0, rng.bernoulli(0.5));
    }
    std::size_t tps = 0;
    for (const auto& e : entries) tps += e.second;
    const std::size_t positives = tps + rng.index(3);
    CHECK(std::abs(average_precision(entries, positives) - sweep_oracle(entries, positives)) <= 1e-9);
  }
  CHECK(average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2) == doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5));
}

TEST_CASE("three-instance toy case against a brute-force pipeline") {
  Rng rng(3);
  std::vector<std::vector<PersonAnnotation>> gt(1);
  for (std::size_t i = 0; i < 3; ++i) {
    gt[0].push_back(make_person(0.2 + 0.3 * static_cast<double>(i), 0.5, 0.15, rng, 0.8));
  }
  std::vector<std::vector<PosePrediction>> preds(1);
  preds[0].push_back(noisy(gt[0][2], 0.01, 0.9, rng));
  preds[0].push_back(noisy(gt[0][0], 0.03, 0.7, rng));
  preds[0].push_back(noisy(gt[0][1], 0.005, 0.4, rng));
  preds[0].push_back({std::vector<double>(2 * kNumJoints, 0.02), 0.8});  // far from everyone
  const std::vector<std::size_t> match{2, 0, 1, 3};
  const double tau = 0.1;
  const EvalReport r = compute_ap(preds, gt, tau);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    std::vector<std::pair<double, bool>> entries;
    std::size_t positives = 0;
    for (const auto& g : gt[0]) positives += g.visible[j];
    for (std::size_t p = 0; p < 4; ++p) {
      if (match[p] == 3) {
        entries.emplace_back(preds[0][p].score, false);
        continue;
      }
      const PersonAnnotation& g = gt[0][match[p]];
      if (!g.visible[j]) continue;
      const double d = std::hypot(preds[0][p].keypoints[2 * j] - g.keypoints[2 * j],
                                  preds[0][p].keypoints[2 * j + 1] - g.keypoints[2 * j + 1]);
      entries.emplace_back(preds[0][p].score, d <= tau * person_scale(g));
    }
    CHECK(std::abs(r.joint_ap[j] - sweep_oracle(entries, positives)) <= 1e-9);
  }
}

TEST_CASE("mean AP is the mean of joint APs and all APs lie in the unit interval") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::vector<PersonAnnotation>> gt(2);
    std::vector<std::vector<PosePrediction>> preds(2);
    for (std::size_t f = 0; f < 2; ++f) {
      for (std::size_t i = 0; i < 1 + rng.index(4); ++i) {
        gt[f].push_back(make_person(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.2, rng, 0.7));
        if (rng.bernoulli(0.8)) preds[f].push_back(noisy(gt[f].back(), 0.02, rng.uniform(), rng));
      }
      if (rng.bernoulli(0.5)) preds[f].push_back(noisy(gt[f][0], 0.3, rng.uniform(), rng));
    }
    const EvalReport r = compute_ap(preds, gt);
    double sum = 0.0;
    for (double ap : r.joint_ap) {
      CHECK((ap >= 0.0 && ap <= 1.0));
      sum += ap;
    }
    CHECK(r.mean_ap == doctest::Approx(sum / kNumJoints).epsilon(1e-15));

    // Enlarging tau never decreases a joint AP.
    const EvalReport wide = compute_ap(preds, gt, 0.2);
    for (std::size_t j = 0; j < kNumJoints; ++j) CHECK(wide.joint_ap[j] >= r.joint_ap[j] - 1e-15);

    // Scaling all scores by a positive constant leaves APs unchanged.
    auto scaled = preds;
    for (auto& f : scaled) {
      for (auto& p : f) p.score *= 0.37;
    }
    CHECK(compute_ap(scaled, gt) == r);
  }
}

TEST_CASE("persons with no visible joints are excluded") {
  Rng rng(5);
  std::vector<std::vector<PersonAnnotation>> gt(1);
  gt[0].push_back(make_person(0.3, 0.5, 0.2, rng));
  PersonAnnotation hidden = make_person(0.7, 0.5, 0.2, rng);
  hidden.visible.assign(kNumJoints, 0);
  gt[0].push_back(hidden);
  const std::vector<std::vector<PosePrediction>> preds{{{gt[0][0].keypoints, 1.0}}};
  const EvalReport r = compute_ap(preds, gt);
  CHECK(r.instances == 1);
  CHECK(r.mean_ap == 1.0);
  CHECK(person_scale(hidden) == 0.0);
}

TEST_CASE("report text lists joint groups in column order") {
  EvalReport r;
  r.joint_ap.fill(0.5);
  r.mean_ap = 0.5;
  const std::string text = r.to_text();
  CHECK(text.rfind("VEPE-EVAL-1\n", 0) == 0);
  CHECK(text.find("columns Shoulder Head Elbow Wrist Hip Ankle Knee Mean\n") != std::string::npos);
  CHECK(text.find("ap 50.00 50.00 50.00 50.00 50.00 50.00 50.00 50.00\n") != std::string::npos);
  CHECK(text.find("joint right_ankle 0.500000\n") != std::string::npos);
}

TEST_CASE("runtime probe schema does not depend on repeats") {
  const std::vector<std::size_t> counts{2, 12};
  std::size_t calls = 0;
  auto forward = [&](std::size_t) { ++calls; };
  const TimingTable one = runtime_probe(forward, counts, 1);
  const TimingTable many = runtime_probe(forward, counts, 20);
  CHECK(calls == 2 * (1 + 1) + 2 * (20 + 1));
  REQUIRE(one.rows.size() == many.rows.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    CHECK(one.rows[i].instances == counts[i]);
    CHECK(many.rows[i].instances == counts[i]);
    CHECK(many.rows[i].repeats == 20);
    CHECK(many.rows[i].min_ms <= many.rows[i].median_ms);
    CHECK(many.rows[i].median_ms <= many.rows[i].max_ms);
  }
  const std::string a = one.to_csv(), b = many.to_csv();
  CHECK(a.substr(0, a.find('\n')) == b.substr(0, b.find('\n')));
  CHECK(std::count(a.begin(), a.end(), '\n') == std::count(b.begin(), b.end(), '\n'));
  CHECK_THROWS(runtime_probe(forward, counts, 0));
}

TEST_CASE("a constant-time instrument gives a ratio near one") {
  auto spin = [](std::size_t) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(3);
    while (std::chrono::steady_clock::now() < until) {
    }
  };
  const std::vector<std::size_t> counts{2, 12};
  const TimingTable t = runtime_probe(spin, counts, 15);
  CHECK(t.ratio() >= 1.0);
  CHECK(t.ratio() < 1.2);
}
