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

#include <cmath>

#include "wabert/gradcheck.hpp"
#include "wabert/losses.hpp"
#include "wabert/ops.hpp"
#include "wabert/rng.hpp"

using namespace wabert;
using namespace wabert::losses;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng) {
  Tensor t = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.next_gaussian();
  return t;
}

Tensor orthonormal_pair_rows() {
  return Tensor::from({1.0, 0.0, 0.0, 1.0}, {2, 2});
}

}  // namespace

TEST_CASE("cosine alignment loss examples") {
  Rng rng(3);
  Tensor m = random_matrix(4, 6, rng);
  CHECK(cosine_align_loss(m, m, Reduction::Sum).value() ==
        doctest::Approx(0.0).epsilon(1e-12));

  Tensor x = orthonormal_pair_rows();
  Tensor y = Tensor::from({0.0, 1.0, 1.0, 0.0}, {2, 2});
  CHECK(cosine_align_loss(x, y, Reduction::Sum).value() ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(cosine_align_loss(x, y, Reduction::Mean).value() ==
        doctest::Approx(1.0).epsilon(1e-12));

  Tensor single = Tensor::from({1.0, 0.0}, {1, 2});
  Tensor anti = Tensor::from({-1.0, 0.0}, {1, 2});
  CHECK(cosine_align_loss(single, anti, Reduction::Sum).value() ==
        doctest::Approx(2.0).epsilon(1e-12));

  Tensor zero = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(cosine_align_loss(single, zero, Reduction::Sum),
                  ZeroNormVector);
}

TEST_CASE("cosine loss is invariant to positive row rescaling") {
  Rng rng(11);
  Tensor a = random_matrix(5, 7, rng);
  Tensor b = random_matrix(5, 7, rng);
  const double base = cosine_align_loss(a, b, Reduction::Sum).value();

  Tensor a2 = Tensor::zeros({5, 7});
  Tensor b2 = Tensor::zeros({5, 7});
  for (std::size_t i = 0; i < 5; ++i) {
    const double sa = 0.2 + 3.0 * rng.next_uniform();
    const double sb = 0.2 + 3.0 * rng.next_uniform();
    for (std::size_t j = 0; j < 7; ++j) {
      a2.at(i, j) = sa * a.at(i, j);
      b2.at(i, j) = sb * b.at(i, j);
    }
  }
  CHECK(std::fabs(cosine_align_loss(a2, b2, Reduction::Sum).value() - base) <
        1e-9);
}

TEST_CASE("info_nce closed forms") {
  Tensor xy = orthonormal_pair_rows();
  CHECK(info_nce(xy, xy, 1.0).value() ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)))
            .epsilon(1e-12));

  // Single row: the positive is the only candidate.
  Tensor one = Tensor::from({0.3, -1.2, 0.5}, {1, 3});
  CHECK(info_nce(one, one, 0.37).value() == doctest::Approx(0.0).epsilon(1e-15));

  // Sharp temperature saturates the softmax: margin 1/tau = 20.
  CHECK(info_nce(xy, xy, 0.05).value() < 1e-8);

  CHECK_THROWS_AS(info_nce(xy, xy, 0.0), NonPositiveTemperature);
  CHECK_THROWS_AS(info_nce(xy, Tensor::zeros({2, 2}), 1.0), ZeroNormVector);
  CHECK_THROWS_AS(info_nce(xy, Tensor::zeros({3, 2}), 1.0), ShapeMismatch);
}

TEST_CASE("info_nce is nonnegative and vanishes only in the margin limit") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor x = random_matrix(3, 5, rng);
    Tensor y = random_matrix(3, 5, rng);
    CHECK(info_nce(x, y, 0.5).value() >= 0.0);
  }
  // margin / tau = 1 / 0.025 = 40
  Tensor xy = orthonormal_pair_rows();
  CHECK(info_nce(xy, xy, 0.025).value() < 1e-12);
}

TEST_CASE("reordering the candidate set leaves info_nce unchanged") {
  Rng rng(31);
  Tensor x = random_matrix(6, 5, rng);
  Tensor y = random_matrix(6, 5, rng);
  const double base = info_nce(x, y, 0.1).value();

  // Permuting the paired rows jointly only reorders the outer sum and each
  // denominator, so the value moves by at most summation noise.
  const std::size_t perm[6] = {4, 0, 5, 2, 1, 3};
  Tensor xp = Tensor::zeros({6, 5});
  Tensor yp = Tensor::zeros({6, 5});
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      xp.at(i, j) = x.at(perm[i], j);
      yp.at(i, j) = y.at(perm[i], j);
    }
  }
  CHECK(std::fabs(info_nce(xp, yp, 0.1).value() - base) < 1e-12);
}

TEST_CASE("aligned token similarity loss is symmetric and nonnegative") {
  Rng rng(41);
  Tensor a = random_matrix(4, 6, rng);
  Tensor b = random_matrix(4, 6, rng);
  CHECK(aligned_token_similarity_loss(a, b, 0.1).value() ==
        aligned_token_similarity_loss(b, a, 0.1).value());

  Tensor xy = orthonormal_pair_rows();
  CHECK(aligned_token_similarity_loss(xy, xy, 1.0).value() ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)))
            .epsilon(1e-12));

  for (int trial = 0; trial < 1000; ++trial) {
    Tensor x = random_matrix(3, 4, rng);
    Tensor y = random_matrix(3, 4, rng);
    CHECK(aligned_token_similarity_loss(x, y, 0.2).value() >= 0.0);
  }
}

TEST_CASE("subword loss closed forms") {
  // Uniform logits: states orthogonal to every head row.
  const std::size_t vocab = 32, d = 8;
  Tensor states = Tensor::zeros({3, d});
  Tensor head = Tensor::zeros({vocab, d});
  for (std::size_t v = 0; v < vocab; ++v) head.at(v, 0) = 1.0;
  for (std::size_t i = 0; i < 3; ++i) states.at(i, 1) = 1.0;
  CHECK(subword_loss(states, head, {0, 7, 31}).value() ==
        doctest::Approx(std::log(32.0)).epsilon(1e-12));

  // +20 margin on the gold id with 3 competitors: loss = log(1 + 3e^-20).
  Tensor head4 = Tensor::zeros({4, 4});
  for (std::size_t v = 0; v < 4; ++v) head4.at(v, v) = 1.0;
  Tensor peaked = Tensor::zeros({1, 4});
  peaked.at(0, 2) = 20.0;
  CHECK(subword_loss(peaked, head4, {2}).value() < 1e-8);

  // Same margin on a wrong id costs about the margin itself.
  CHECK(subword_loss(peaked, head4, {1}).value() ==
        doctest::Approx(20.0).epsilon(1e-6));

  CHECK_THROWS_AS(subword_loss(peaked, head4, {4}), IdOutOfRange);
  CHECK_THROWS_AS(subword_loss(peaked, head4, {0, 1}), ShapeMismatch);
}

TEST_CASE("total loss combines components with configured weights") {
  LossConfig config;
  LossBundle bundle =
      total_loss(Tensor::scalar(0.3), Tensor::scalar(0.0),
                 Tensor::scalar(3.4657), config);
  CHECK(bundle.total_value() == doctest::Approx(3.7657).epsilon(1e-12));

  LossBundle zeros = total_loss(Tensor::scalar(0.0), Tensor::scalar(0.0),
                                Tensor::scalar(0.0), config);
  CHECK(zeros.total_value() == 0.0);

  LossConfig masked;
  masked.w_quantity = 0.0;
  masked.w_subword = 0.0;
  LossBundle only_align =
      total_loss(Tensor::scalar(0.7), Tensor::scalar(9.0),
                 Tensor::scalar(4.0), masked);
  CHECK(only_align.total_value() == doctest::Approx(0.7).epsilon(1e-15));

  CHECK_THROWS_AS(total_loss(Tensor::scalar(std::nan("")), Tensor::scalar(0.0),
                             Tensor::scalar(0.0), config),
                  NonFiniteComponent);
}

TEST_CASE("weighted total matches its definition to 1e-12 on random draws") {
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    LossConfig config;
    config.w_align = rng.next_uniform() * 2.0;
    config.w_quantity = rng.next_uniform() * 2.0;
    config.w_subword = rng.next_uniform() * 2.0;
    const double a = rng.next_uniform() * 5.0;
    const double q = rng.next_uniform() * 5.0;
    const double s = rng.next_uniform() * 5.0;
    LossBundle bundle = total_loss(Tensor::scalar(a), Tensor::scalar(q),
                                   Tensor::scalar(s), config);
    const double expect =
        config.w_align * a + config.w_quantity * q + config.w_subword * s;
    CHECK(std::fabs(bundle.total_value() - expect) < 1e-12);
  }
}

TEST_CASE("loss gradients pass finite differences") {
  Rng rng(61);
  auto check = [&](const char* name, const ScalarFn& f,
                   std::vector<Tensor> params) {
    CAPTURE(name);
    GradReport report = finite_diff_check(f, std::move(params), 1e-5);
    CHECK_MESSAGE(report.max_abs_rel_error < 1e-4, name, ": ",
                  report.max_abs_rel_error);
  };
  check("cosine_align_loss",
        [](std::vector<Tensor>& p) {
          return cosine_align_loss(p[0], p[1], Reduction::Sum);
        },
        {random_matrix(4, 8, rng), random_matrix(4, 8, rng)});
  check("info_nce",
        [](std::vector<Tensor>& p) { return info_nce(p[0], p[1], 0.1); },
        {random_matrix(4, 8, rng), random_matrix(4, 8, rng)});
  check("aligned_token_similarity_loss",
        [](std::vector<Tensor>& p) {
          return aligned_token_similarity_loss(p[0], p[1], 0.1);
        },
        {random_matrix(4, 8, rng), random_matrix(4, 8, rng)});
  check("subword_loss",
        [](std::vector<Tensor>& p) {
          return subword_loss(p[0], p[1], {3, 0, 5, 2});
        },
        {random_matrix(4, 8, rng), random_matrix(12, 8, rng)});
}
