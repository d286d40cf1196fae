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

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wabert/tensor.hpp"

namespace wabert {

// Result of comparing reverse-mode gradients against central differences.
// Relative error is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
struct GradReport {
  double max_abs_rel_error = 0.0;
  std::string worst_coordinate;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
  std::size_t coords_excluded = 0;
};

// Scalar-valued computation over a parameter set. Called repeatedly with
// perturbed parameter values; must rebuild its graph from scratch each time.
using ScalarFn = std::function<Tensor(std::vector<Tensor>&)>;

// Returns true for coordinates to skip, e.g. ones whose +/-epsilon
// perturbation moves a CIF firing boundary.
using ExcludePredicate = std::function<bool(std::size_t param, std::size_t coord)>;

// Central-difference check of every non-excluded coordinate.
// epsilon must lie in [1e-7, 1e-3]. Throws NonFiniteValue if f yields a
// non-finite value at any probe point.
GradReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> params,
                             double epsilon,
                             const ExcludePredicate& exclude = nullptr);

}  // namespace wabert
