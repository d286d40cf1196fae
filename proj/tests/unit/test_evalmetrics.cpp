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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "wabert/evalmetrics.hpp"
#include "wabert/ops.hpp"
#include "wabert/rng.hpp"

using namespace wabert;
using namespace wabert::evalm;

namespace {

cif::BoundarySet bounds(std::vector<std::pair<double, double>> spans) {
  cif::BoundarySet set;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    set.entries.push_back({k, spans[k].first, spans[k].second});
  }
  return set;
}

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.next_gaussian();
  return t;
}

}  // namespace

TEST_CASE("boundary errors: exact prediction scores zero") {
  cif::BoundarySet gold = bounds({{0, 30}, {30, 75}, {75, 120}});
  BoundarySummary s = boundary_errors(gold, gold);
  CHECK(s.mae_ms == 0.0);
  CHECK(s.median_ms == 0.0);
  CHECK(s.errors.pooled_abs.size() == 6);
}

TEST_CASE("boundary errors: constant shift") {
  cif::BoundarySet gold = bounds({{0, 30}, {30, 75}});
  cif::BoundarySet pred = bounds({{30, 60}, {60, 105}});
  BoundarySummary s = boundary_errors(pred, gold);
  CHECK(s.mae_ms == doctest::Approx(30.0));
  CHECK(s.median_ms == doctest::Approx(30.0));
  for (double e : s.errors.left_err_ms) CHECK(e == doctest::Approx(30.0));
}

TEST_CASE("boundary errors use the lower median on even counts") {
  cif::BoundarySet gold = bounds({{0, 10}});
  cif::BoundarySet pred = bounds({{2, 16}});  // abs errors {2, 6}
  BoundarySummary s = boundary_errors(pred, gold);
  CHECK(s.median_ms == doctest::Approx(2.0));
  CHECK(s.mae_ms == doctest::Approx(4.0));
}

TEST_CASE("boundary errors demand matching counts") {
  CHECK_THROWS_AS(
      boundary_errors(bounds({{0, 1}}), bounds({{0, 1}, {1, 2}})),
      CountMismatch);
}

TEST_CASE("tolerance accuracy counts pooled errors per cutoff") {
  ToleranceReport zero = tolerance_accuracy({0, 0, 0, 0},
                                            {50, 100, 500, 1000});
  for (double acc : zero.accuracy) CHECK(acc == 1.0);

  ToleranceReport mixed = tolerance_accuracy({30, 70, 600, 1200},
                                             {50, 100, 500, 1000});
  CHECK(mixed.accuracy[0] == doctest::Approx(0.25));
  CHECK(mixed.accuracy[1] == doctest::Approx(0.50));
  CHECK(mixed.accuracy[2] == doctest::Approx(0.50));  // 600 exceeds 500
  CHECK(mixed.accuracy[3] == doctest::Approx(0.75));

  CHECK_THROWS_AS(tolerance_accuracy({}, {50.0}), EmptyErrors);
  CHECK_THROWS_AS(tolerance_accuracy({1.0}, {100.0, 50.0}), ConfigError);
}

TEST_CASE("tolerance accuracy is monotone in the cutoff") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> errors;
    const std::size_t n = 1 + static_cast<std::size_t>(rng.next_int(0, 40));
    for (std::size_t i = 0; i < n; ++i)
      errors.push_back(1500.0 * rng.next_uniform());
    ToleranceReport r = tolerance_accuracy(
        errors, {kDefaultCutoffsMs.begin(), kDefaultCutoffsMs.end()});
    for (std::size_t c = 1; c < r.accuracy.size(); ++c) {
      CHECK(r.accuracy[c] >= r.accuracy[c - 1]);
    }
  }
}

TEST_CASE("similarity heatmap basics") {
  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  HeatmapMatrix h = similarity_heatmap(eye, eye);
  CHECK(h.values.at(0, 0) == doctest::Approx(1.0));
  CHECK(h.values.at(0, 1) == doctest::Approx(0.0));

  Tensor anti = Tensor::from({-1, 0, 0, -1}, {2, 2});
  HeatmapMatrix ha = similarity_heatmap(eye, anti);
  CHECK(ha.values.at(0, 0) == doctest::Approx(-1.0));

  // cos symmetry: swapping arguments transposes the map.
  Rng rng(6);
  Tensor a = random_matrix(3, 5, rng);
  Tensor b = random_matrix(4, 5, rng);
  HeatmapMatrix ab = similarity_heatmap(a, b);
  HeatmapMatrix ba = similarity_heatmap(b, a);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(ab.values.at(i, j) == doctest::Approx(ba.values.at(j, i)));

  for (std::size_t i = 0; i < ab.values.numel(); ++i) {
    CHECK(ab.values.at(i) <= 1.0 + 1e-12);
    CHECK(ab.values.at(i) >= -1.0 - 1e-12);
  }
}

TEST_CASE("diagonality score") {
  Tensor eye = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  CHECK(diagonality_score({eye}) == doctest::Approx(1.0));

  CHECK(diagonality_score({Tensor::full({3, 3}, 0.37)}) ==
        doctest::Approx(0.0));

  Tensor hand = Tensor::from({0.9, 0.1, 0.2, 0.8}, {2, 2});
  CHECK(diagonality_score({hand}) == doctest::Approx(0.7));

  CHECK_THROWS_AS(diagonality_score({Tensor::zeros({2, 3})}), NonSquare);
}

TEST_CASE("diagonality of row-softmaxed noise is near zero on average") {
  Rng rng(7);
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    HeatmapMatrix h;
    h.values = row_softmax(random_matrix(6, 6, rng));
    total += diagonality_score(h);
  }
  CHECK(std::fabs(total / 100.0) < 0.1);
}

TEST_CASE("heatmap exports") {
  Tensor v = Tensor::from({1.0, -1.0, 0.0, 0.5}, {2, 2});
  HeatmapMatrix h{v};
  const std::string csv = heatmap_to_csv(h);
  CHECK(csv == "1.000000,-1.000000\n0.000000,0.500000\n");

  const std::string pgm = heatmap_to_pgm(h);
  CHECK(pgm.substr(0, 3) == "P5\n");
  // pixels: 255, 0, 128 (0.0 -> 127.5 rounds up), 191
  const std::string pixels = pgm.substr(pgm.size() - 4);
  CHECK(static_cast<unsigned char>(pixels[0]) == 255);
  CHECK(static_cast<unsigned char>(pixels[1]) == 0);
  CHECK(static_cast<unsigned char>(pixels[2]) == 128);
  CHECK(static_cast<unsigned char>(pixels[3]) == 191);
}

TEST_CASE("pca: collinear points leave no second component") {
  Tensor x = Tensor::zeros({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    x.at(i, 0) = static_cast<double>(i) * 2.0;
    x.at(i, 1) = static_cast<double>(i) * -1.0;
    x.at(i, 2) = static_cast<double>(i) * 0.5;
  }
  PcaProjection p = pca_project(x);
  CHECK(p.explained_variance[0] > 0.0);
  CHECK(p.explained_variance[1] < 1e-9);
  CHECK(p.explained_variance[0] >= p.explained_variance[1]);
}

TEST_CASE("pca preserves pairwise distances for planar data") {
  Rng rng(8);
  const std::size_t k = 12, d = 9;
  // Orthonormal u, v in R^d.
  std::vector<double> u(d, 0.0), v(d, 0.0);
  u[0] = 1.0;
  v[3] = 1.0;
  Tensor x = Tensor::zeros({k, d});
  std::vector<std::pair<double, double>> coords;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = rng.next_gaussian(), b = rng.next_gaussian();
    coords.emplace_back(a, b);
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = a * u[j] + b * v[j];
  }
  PcaProjection p = pca_project(x);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double dx = coords[i].first - coords[j].first;
      const double dy = coords[i].second - coords[j].second;
      const double expected = std::sqrt(dx * dx + dy * dy);
      const double px = p.points.at(i, 0) - p.points.at(j, 0);
      const double py = p.points.at(i, 1) - p.points.at(j, 1);
      CHECK(std::sqrt(px * px + py * py) ==
            doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("pca matches an SVD oracle up to sign") {
  Rng rng(9);
  const std::size_t k = 20, d = 6;
  Tensor x = random_matrix(k, d, rng);
  PcaProjection p = pca_project(x);

  Eigen::MatrixXd centered(k, d);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) centered(i, j) = x.at(i, j);
  centered.rowwise() -= centered.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  Eigen::MatrixXd proj = centered * svd.matrixV().leftCols(2);

  for (int comp = 0; comp < 2; ++comp) {
    // Resolve the sign against the first point with a nonzero coordinate.
    double flip = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (std::fabs(proj(i, comp)) > 1e-9) {
        flip = proj(i, comp) * p.points.at(i, comp) >= 0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(p.points.at(i, comp) ==
            doctest::Approx(flip * proj(i, comp)).epsilon(1e-8));
    }
    // Explained variance equals the squared singular value over k-1.
    const double sv = svd.singularValues()(comp);
    CHECK(p.explained_variance[comp] ==
          doctest::Approx(sv * sv / static_cast<double>(k - 1)).epsilon(1e-8));
  }
}

TEST_CASE("pca is invariant to translation") {
  Rng rng(10);
  Tensor x = random_matrix(9, 5, rng);
  PcaProjection base = pca_project(x);
  Tensor shifted = Tensor::zeros({9, 5});
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      shifted.at(i, j) = x.at(i, j) + 100.0 + static_cast<double>(j);
  PcaProjection moved = pca_project(shifted);
  for (std::size_t i = 0; i < base.points.numel(); ++i) {
    CHECK(std::fabs(base.points.at(i) - moved.points.at(i)) < 1e-9);
  }
}

TEST_CASE("pca rejects degenerate inputs") {
  CHECK_THROWS_AS(pca_project(Tensor::full({4, 3}, 2.5)), DegenerateData);
  CHECK_THROWS_AS(pca_project(Tensor::zeros({2, 3})), ShapeMismatch);
}

TEST_CASE("pca csv export carries group tags") {
  Rng rng(11);
  Tensor x = random_matrix(3, 4, rng);
  PcaProjection p = pca_project(x);
  const std::string csv = pca_to_csv(p, {"aligned", "aligned", "linguistic"});
  CHECK(csv.rfind("point_index,x,y,group_tag\n", 0) == 0);
  CHECK(csv.find(",linguistic\n") != std::string::npos);
  CHECK_THROWS_AS(pca_to_csv(p, {"one"}), ShapeMismatch);
}

TEST_CASE("weighted classification scores on a hand-worked confusion") {
  // true class in rows: supports 10/10/10, diagonal 8/6/9.
  std::vector<std::vector<std::size_t>> confusion = {
      {8, 1, 1}, {2, 6, 2}, {0, 1, 9}};
  ClassificationScores s = classification_scores(confusion);
  // recalls .8 .6 .9 -> weighted recall = accuracy = 23/30
  CHECK(s.weighted_recall == doctest::Approx(23.0 / 30.0).epsilon(1e-12));
  // precisions .8, .75, .75; f1 per class .8, 2*.75*.6/1.35, 2*.75*.9/1.65
  const double f1_0 = 0.8;
  const double f1_1 = 2.0 * 0.75 * 0.6 / 1.35;
  const double f1_2 = 2.0 * 0.75 * 0.9 / 1.65;
  CHECK(s.weighted_f1 ==
        doctest::Approx((f1_0 + f1_1 + f1_2) / 3.0).epsilon(1e-12));

  ClassificationScores perfect = classification_scores(
      {{5, 0, 0}, {0, 7, 0}, {0, 0, 3}});
  CHECK(perfect.weighted_recall == doctest::Approx(1.0));
  CHECK(perfect.weighted_f1 == doctest::Approx(1.0));

  CHECK_THROWS_AS(classification_scores({{0, 0}, {0, 0}}), EmptyErrors);
}
