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

#include <array>
#include <string>
#include <vector>

#include "wabert/cif.hpp"
#include "wabert/tensor.hpp"

// Alignment quality and analysis metrics: boundary errors, tolerance
// accuracies, similarity heatmaps with a diagonality score, PCA
// projections, and weighted classification scores.

namespace wabert::evalm {

struct BoundaryErrors {
  std::vector<double> left_err_ms;   // signed, per token
  std::vector<double> right_err_ms;  // signed, per token
  std::vector<double> pooled_abs;    // both edges pooled, length 2N
};

// MAE over both edges; median is the lower median for even counts.
struct BoundarySummary {
  BoundaryErrors errors;
  double mae_ms = 0.0;
  double median_ms = 0.0;
};

BoundarySummary boundary_errors(const cif::BoundarySet& pred,
                                const cif::BoundarySet& gold);

constexpr std::array<double, 4> kDefaultCutoffsMs = {50.0, 100.0, 500.0, 1000.0};

struct ToleranceReport {
  std::vector<double> cutoffs_ms;
  std::vector<double> accuracy;  // fraction of pooled errors within cutoff
};

ToleranceReport tolerance_accuracy(const std::vector<double>& pooled_abs_errors,
                                   const std::vector<double>& cutoffs_ms);

struct HeatmapMatrix {
  Tensor values;  // [N', N] cosines in [-1, 1]
};

HeatmapMatrix similarity_heatmap(const Tensor& a_hat, const Tensor& l);

// mean(diagonal) - mean(off-diagonal); square matrices only.
double diagonality_score(const HeatmapMatrix& h);

std::string heatmap_to_csv(const HeatmapMatrix& h);
// 8-bit binary PGM; pixel = round(255 * (cos + 1) / 2).
std::string heatmap_to_pgm(const HeatmapMatrix& h);

struct PcaProjection {
  Tensor points;  // [K, 2]
  std::array<double, 2> explained_variance = {0.0, 0.0};
};

// Mean-center, eigen-decompose the covariance directly (small d), project
// onto the top two directions. Sign convention: the first nonzero loading
// of each direction is positive.
PcaProjection pca_project(const Tensor& x);

std::string pca_to_csv(const PcaProjection& p,
                       const std::vector<std::string>& group_tags);

struct ClassificationScores {
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
};

// confusion[true_class][predicted_class]; weights are true-class supports.
ClassificationScores classification_scores(
    const std::vector<std::vector<std::size_t>>& confusion);

}  // namespace wabert::evalm
