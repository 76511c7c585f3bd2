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

#include "vepe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vepe/ops.hpp"
#include "vepe/rng.hpp"

namespace vepe {

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& in : inputs) m = std::max(m, in.max_rel_error);
  return m;
}

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS " : "FAIL ") << op;
  if (!diagnostic.empty()) {
    os << " : " << diagnostic;
    return os.str();
  }
  os.precision(3);
  os << " max_rel_err=" << std::scientific << max_rel_error() << " tol=" << tol;
  for (const auto& in : inputs) {
    if (!passed && in.max_rel_error > tol) {
      os << " [input " << in.input << " index " << in.worst_index
         << " analytic=" << in.analytic << " numeric=" << in.numeric << "]";
    }
  }
  return os.str();
}

namespace {

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](double v) { return std::isfinite(v); });
}

double projected(const GradFn& op, const std::vector<Tensor>& inputs,
                 const std::vector<double>& weights) {
  NoGradGuard guard;
  const Tensor out = op(inputs);
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * out.at(i);
  return s;
}

}  // namespace

GradcheckReport gradcheck(const std::string& name, const GradFn& op,
                          std::vector<Tensor> inputs, double tol,
                          const GradcheckOptions& options) {
  GradcheckReport report;
  report.op = name;
  report.tol = tol;

  Tensor probe;
  {
    NoGradGuard guard;
    probe = op(inputs);
  }
  if (!all_finite(probe)) {
    report.diagnostic = "non-finite forward output from " + name;
    return report;
  }
  Rng rng(options.seed);
  std::vector<double> weights(probe.numel());
  for (double& w : weights) w = rng.uniform(-1.0, 1.0);

  for (Tensor& t : inputs) t.zero_grad();
  tape().clear();
  {
    const Tensor out = op(inputs);
    const Tensor loss = sum(mul_const(out, weights));
    tape().backward(loss);
    tape().clear();
  }

  report.passed = true;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    GradcheckInput rec;
    rec.input = i;
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double orig = t.at(j);
      t.data_mut()[j] = orig + options.step;
      const double up = projected(op, inputs, weights);
      t.data_mut()[j] = orig - options.step;
      const double down = projected(op, inputs, weights);
      t.data_mut()[j] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      if (!std::isfinite(numeric)) {
        report.passed = false;
        report.diagnostic = "non-finite finite-difference value in " + name;
        return report;
      }
      const double denom =
          std::max({std::fabs(analytic[j]), std::fabs(numeric), options.floor});
      const double err = std::fabs(analytic[j] - numeric) / denom;
      if (j == 0 || err > rec.max_rel_error) {
        rec.max_rel_error = err;
        rec.worst_index = j;
        rec.analytic = analytic[j];
        rec.numeric = numeric;
      }
    }
    if (rec.max_rel_error > tol) report.passed = false;
    report.inputs.push_back(rec);
    t.zero_grad();
  }
  return report;
}

}  // namespace vepe
