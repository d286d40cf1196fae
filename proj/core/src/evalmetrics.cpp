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

#include "wabert/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wabert/ops.hpp"

namespace wabert::evalm {

BoundarySummary boundary_errors(const cif::BoundarySet& pred,
                                const cif::BoundarySet& gold) {
  if (pred.entries.size() != gold.entries.size()) {
    throw CountMismatch("boundary_errors: " +
                        std::to_string(pred.entries.size()) +
                        " predicted vs " + std::to_string(gold.entries.size()) +
                        " gold tokens");
  }
  BoundarySummary summary;
  for (std::size_t k = 0; k < pred.entries.size(); ++k) {
    const double left = pred.entries[k].left_ms - gold.entries[k].left_ms;
    const double right = pred.entries[k].right_ms - gold.entries[k].right_ms;
    summary.errors.left_err_ms.push_back(left);
    summary.errors.right_err_ms.push_back(right);
    summary.errors.pooled_abs.push_back(std::fabs(left));
    summary.errors.pooled_abs.push_back(std::fabs(right));
  }
  double total = 0.0;
  for (double e : summary.errors.pooled_abs) total += e;
  summary.mae_ms = total / static_cast<double>(summary.errors.pooled_abs.size());

  std::vector<double> sorted = summary.errors.pooled_abs;
  std::sort(sorted.begin(), sorted.end());
  // Lower median for even counts.
  summary.median_ms = sorted[(sorted.size() - 1) / 2];
  return summary;
}

ToleranceReport tolerance_accuracy(const std::vector<double>& pooled_abs_errors,
                                   const std::vector<double>& cutoffs_ms) {
  if (pooled_abs_errors.empty()) {
    throw EmptyErrors("tolerance_accuracy: no errors to score");
  }
  for (std::size_t i = 0; i < cutoffs_ms.size(); ++i) {
    if (cutoffs_ms[i] <= 0.0 || (i > 0 && cutoffs_ms[i] <= cutoffs_ms[i - 1])) {
      throw ConfigError("tolerance cutoffs must be positive and ascending");
    }
  }
  ToleranceReport report;
  report.cutoffs_ms = cutoffs_ms;
  for (double cutoff : cutoffs_ms) {
    std::size_t hit = 0;
    for (double e : pooled_abs_errors) {
      if (e <= cutoff) ++hit;
    }
    report.accuracy.push_back(static_cast<double>(hit) /
                              static_cast<double>(pooled_abs_errors.size()));
  }
  return report;
}

HeatmapMatrix similarity_heatmap(const Tensor& a_hat, const Tensor& l) {
  if (a_hat.rank() != 2 || l.rank() != 2 || a_hat.shape[1] != l.shape[1]) {
    throw ShapeMismatch("similarity_heatmap: " + shape_str(a_hat.shape) +
                        " vs " + shape_str(l.shape));
  }
  HeatmapMatrix h;
  h.values = matmul_nt(row_l2_normalize(a_hat), row_l2_normalize(l));
  return h;
}

double diagonality_score(const HeatmapMatrix& h) {
  const std::size_t n = h.values.rows();
  if (n != h.values.cols()) {
    throw NonSquare("diagonality_score: matrix is " + shape_str(h.values.shape));
  }
  double diag = 0.0, off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        diag += h.values.at(i, j);
      } else {
        off += h.values.at(i, j);
      }
    }
  }
  const double diag_mean = diag / static_cast<double>(n);
  const double off_mean =
      n > 1 ? off / static_cast<double>(n * n - n) : 0.0;
  return diag_mean - off_mean;
}

std::string heatmap_to_csv(const HeatmapMatrix& h) {
  std::string out;
  char cell[40];
  for (std::size_t i = 0; i < h.values.rows(); ++i) {
    for (std::size_t j = 0; j < h.values.cols(); ++j) {
      std::snprintf(cell, sizeof(cell), "%s%.6f", j ? "," : "",
                    h.values.at(i, j));
      out += cell;
    }
    out += "\n";
  }
  return out;
}

std::string heatmap_to_pgm(const HeatmapMatrix& h) {
  std::string out = "P5\n" + std::to_string(h.values.cols()) + " " +
                    std::to_string(h.values.rows()) + "\n255\n";
  for (std::size_t i = 0; i < h.values.rows(); ++i) {
    for (std::size_t j = 0; j < h.values.cols(); ++j) {
      const double v = std::clamp(h.values.at(i, j), -1.0, 1.0);
      out += static_cast<char>(
          static_cast<unsigned char>(std::lround(255.0 * (v + 1.0) / 2.0)));
    }
  }
  return out;
}

namespace {

// Cyclic Jacobi rotations on a symmetric matrix; plenty for d <= 64.
void jacobi_eigen(std::vector<double>& a, std::size_t d,
                  std::vector<double>& eigenvectors,
                  std::vector<double>& eigenvalues) {
  eigenvectors.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eigenvectors[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 128; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double aip = a[i * d + p], aiq = a[i * d + q];
          a[i * d + p] = c * aip - s * aiq;
          a[i * d + q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double api = a[p * d + i], aqi = a[q * d + i];
          a[p * d + i] = c * api - s * aqi;
          a[q * d + i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = eigenvectors[i * d + p];
          const double viq = eigenvectors[i * d + q];
          eigenvectors[i * d + p] = c * vip - s * viq;
          eigenvectors[i * d + q] = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(d);
  for (std::size_t i = 0; i < d; ++i) eigenvalues[i] = a[i * d + i];
}

}  // namespace

PcaProjection pca_project(const Tensor& x) {
  if (x.rank() != 2 || x.shape[0] < 3 || x.shape[1] < 2) {
    throw ShapeMismatch("pca_project: need at least 3 points of width >= 2");
  }
  const std::size_t k = x.shape[0], d = x.shape[1];

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
  for (double& m : mean) m /= static_cast<double>(k);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = x.at(i, a) - mean[a];
      for (std::size_t b = a; b < d; ++b) {
        cov[a * d + b] += ca * (x.at(i, b) - mean[b]);
      }
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(k - 1);
      cov[b * d + a] = cov[a * d + b];
    }
  }

  std::vector<double> vectors, values;
  jacobi_eigen(cov, d, vectors, values);

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] > values[b];
  });
  if (values[order[0]] < 1e-15) {
    throw DegenerateData("pca_project: covariance has rank 0");
  }

  PcaProjection out;
  out.points = Tensor::zeros({k, 2});
  for (int comp = 0; comp < 2; ++comp) {
    const std::size_t col = order[comp];
    std::vector<double> dir(d);
    for (std::size_t j = 0; j < d; ++j) dir[j] = vectors[j * d + col];
    for (std::size_t j = 0; j < d; ++j) {
      if (std::fabs(dir[j]) > 1e-12) {
        if (dir[j] < 0.0) {
          for (double& v : dir) v = -v;
        }
        break;
      }
    }
    out.explained_variance[comp] = std::max(0.0, values[col]);
    for (std::size_t i = 0; i < k; ++i) {
      double proj = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        proj += (x.at(i, j) - mean[j]) * dir[j];
      out.points.at(i, static_cast<std::size_t>(comp)) = proj;
    }
  }
  return out;
}

std::string pca_to_csv(const PcaProjection& p,
                       const std::vector<std::string>& group_tags) {
  if (group_tags.size() != p.points.rows()) {
    throw ShapeMismatch("pca_to_csv: " + std::to_string(group_tags.size()) +
                        " tags for " + std::to_string(p.points.rows()) +
                        " points");
  }
  std::string out = "point_index,x,y,group_tag\n";
  char line[128];
  for (std::size_t i = 0; i < p.points.rows(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,", i, p.points.at(i, 0),
                  p.points.at(i, 1));
    out += line;
    out += group_tags[i];
    out += "\n";
  }
  return out;
}

ClassificationScores classification_scores(
    const std::vector<std::vector<std::size_t>>& confusion) {
  const std::size_t c = confusion.size();
  std::size_t total = 0;
  std::vector<std::size_t> support(c, 0), predicted(c, 0), correct(c, 0);
  for (std::size_t t = 0; t < c; ++t) {
    if (confusion[t].size() != c) {
      throw ShapeMismatch("classification_scores: confusion must be square");
    }
    for (std::size_t p = 0; p < c; ++p) {
      support[t] += confusion[t][p];
      predicted[p] += confusion[t][p];
      total += confusion[t][p];
    }
    correct[t] = confusion[t][t];
  }
  if (total == 0) throw EmptyErrors("classification_scores: empty confusion");

  ClassificationScores scores;
  for (std::size_t t = 0; t < c; ++t) {
    if (support[t] == 0) continue;
    const double weight =
        static_cast<double>(support[t]) / static_cast<double>(total);
    const double recall =
        static_cast<double>(correct[t]) / static_cast<double>(support[t]);
    const double precision =
        predicted[t] == 0 ? 0.0
                          : static_cast<double>(correct[t]) /
                                static_cast<double>(predicted[t]);
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    scores.weighted_recall += weight * recall;
    scores.weighted_f1 += weight * f1;
  }
  return scores;
}

}  // namespace wabert::evalm
