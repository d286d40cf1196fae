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

#include "wabert/losses.hpp"

#include <cmath>
#include <numeric>

#include "wabert/ops.hpp"

namespace wabert::losses {

namespace {

void check_paired_rows(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0] ||
      a.shape[1] != b.shape[1]) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  }
  if (a.shape[0] == 0) {
    throw ShapeMismatch(std::string(op) + ": empty input");
  }
}

}  // namespace

Tensor cosine_align_loss(const Tensor& a_hat, const Tensor& l,
                         Reduction reduction) {
  check_paired_rows(a_hat, l, "cosine_align_loss");
  Tensor an = row_l2_normalize(a_hat);
  Tensor ln = row_l2_normalize(l);
  Tensor cos_rows = row_sum(mul(an, ln));              // [N]
  Tensor one_minus = add_scalar(neg(cos_rows), 1.0);   // 1 - cos per row
  return reduction == Reduction::Sum ? sum_all(one_minus) : mean_all(one_minus);
}

Tensor info_nce(const Tensor& x, const Tensor& y, double tau) {
  check_paired_rows(x, y, "info_nce");
  if (tau <= 0.0) {
    throw NonPositiveTemperature("info_nce: tau = " + std::to_string(tau));
  }
  const std::size_t n = x.shape[0];
  Tensor cos_matrix = matmul_nt(row_l2_normalize(x), row_l2_normalize(y));
  Tensor logits = mul_scalar(cos_matrix, 1.0 / tau);
  std::vector<std::size_t> diag(n);
  std::iota(diag.begin(), diag.end(), 0);
  return softmax_cross_entropy(logits, diag);
}

Tensor aligned_token_similarity_loss(const Tensor& a_hat, const Tensor& l,
                                     double tau) {
  Tensor forward_dir = info_nce(a_hat, l, tau);
  Tensor reverse_dir = info_nce(l, a_hat, tau);
  return mul_scalar(add(forward_dir, reverse_dir), 0.5);
}

Tensor subword_loss(const Tensor& top_states, const Tensor& head,
                    const std::vector<std::size_t>& gold_ids) {
  if (top_states.rank() != 2 || head.rank() != 2 ||
      top_states.shape[1] != head.shape[1]) {
    throw ShapeMismatch("subword_loss: states " + shape_str(top_states.shape) +
                        " vs head " + shape_str(head.shape));
  }
  if (gold_ids.size() != top_states.shape[0]) {
    throw ShapeMismatch("subword_loss: " + std::to_string(gold_ids.size()) +
                        " ids for " + std::to_string(top_states.shape[0]) +
                        " states");
  }
  const std::size_t vocab = head.shape[0];
  for (std::size_t id : gold_ids) {
    if (id >= vocab) {
      throw IdOutOfRange("subword_loss: gold id " + std::to_string(id) +
                         " >= vocab " + std::to_string(vocab));
    }
  }
  Tensor logits = matmul_nt(top_states, head);
  return softmax_cross_entropy(logits, gold_ids);
}

LossBundle total_loss(const Tensor& align, const Tensor& quantity,
                      const Tensor& subword, const LossConfig& config) {
  for (const Tensor* t : {&align, &quantity, &subword}) {
    if (!std::isfinite(t->value())) {
      throw NonFiniteComponent("total_loss: non-finite loss component");
    }
  }
  LossBundle bundle;
  bundle.align = align;
  bundle.quantity = quantity;
  bundle.subword = subword;
  bundle.total = add(add(mul_scalar(align, config.w_align),
                         mul_scalar(quantity, config.w_quantity)),
                     mul_scalar(subword, config.w_subword));
  return bundle;
}

}  // namespace wabert::losses
