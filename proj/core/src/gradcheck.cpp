// Copyright 2026 The WaBERT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wabert/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace wabert {

namespace {

double eval_forward(const ScalarFn& f, std::vector<Tensor>& params) {
  Tensor out = f(params);
  const double v = out.value();
  if (!std::isfinite(v)) {
    throw NonFiniteValue("finite_diff_check: objective is non-finite");
  }
  return v;
}

}  // namespace

GradReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> params,
                             double epsilon, const ExcludePredicate& exclude) {
  if (epsilon < 1e-7 || epsilon > 1e-3) {
    throw std::invalid_argument("finite_diff_check: epsilon outside [1e-7, 1e-3]");
  }

  // Analytic pass.
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor loss = f(params);
  if (!std::isfinite(loss.value())) {
    throw NonFiniteValue("finite_diff_check: objective is non-finite");
  }
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    p.ensure_grad();
    analytic.push_back(*p.grad);
  }

  // Numeric probes run without tape recording.
  for (Tensor& p : params) p.set_requires_grad(false);

  GradReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    for (std::size_t ci = 0; ci < p.numel(); ++ci) {
      if (exclude && exclude(pi, ci)) {
        ++report.coords_excluded;
        continue;
      }
      const double saved = p.at(ci);
      p.at(ci) = saved + epsilon;
      const double up = eval_forward(f, params);
      p.at(ci) = saved - epsilon;
      const double down = eval_forward(f, params);
      p.at(ci) = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][ci];
      const double rel =
          std::fabs(a - numeric) /
          std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      ++report.coords_checked;
      if (rel > report.max_abs_rel_error) {
        report.max_abs_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = ci;
        report.analytic = a;
        report.numeric = numeric;
        report.worst_coordinate =
            "param" + std::to_string(pi) + "[" + std::to_string(ci) + "]";
      }
    }
  }
  for (Tensor& p : params) p.set_requires_grad(true);
  return report;
}

}  // namespace wabert
