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

#include <vector>

#include "wabert/tensor.hpp"

// Training objectives: the cosine alignment baseline, the symmetric InfoNCE
// aligned-token similarity loss, the frozen-head subword cross-entropy, and
// their weighted total.

namespace wabert::losses {

enum class AlignMode { Cosine, InfoNce };
enum class Reduction { Sum, Mean };

struct LossConfig {
  double tau = 0.1;
  AlignMode align_mode = AlignMode::InfoNce;
  double w_align = 1.0;
  double w_quantity = 1.0;
  double w_subword = 1.0;
  Reduction cosine_reduction = Reduction::Sum;
  // Pool rows across the batch so negatives span utterances. Off by
  // default: negatives come from the same utterance only.
  bool cross_utterance_negatives = false;
};

struct LossBundle {
  Tensor align;
  Tensor quantity;
  Tensor subword;
  Tensor total;

  double align_value() const { return align.value(); }
  double quantity_value() const { return quantity.value(); }
  double subword_value() const { return subword.value(); }
  double total_value() const { return total.value(); }
};

// sum_i (1 - cos(a_hat_i, l_i)), or the mean under Reduction::Mean.
Tensor cosine_align_loss(const Tensor& a_hat, const Tensor& l,
                         Reduction reduction);

// (1/N) sum_i -log( exp(cos(x_i,y_i)/tau) / sum_j exp(cos(x_i,y_j)/tau) ).
// Negatives are the other rows of y.
Tensor info_nce(const Tensor& x, const Tensor& y, double tau);

// Symmetrized InfoNCE: half of each direction.
Tensor aligned_token_similarity_loss(const Tensor& a_hat, const Tensor& l,
                                     double tau);

// Mean cross-entropy of the frozen output head over all tokens.
// `head` is the projection table [vocab, d]; logits are states * head^T.
Tensor subword_loss(const Tensor& top_states, const Tensor& head,
                    const std::vector<std::size_t>& gold_ids);

// total = w_align*align + w_quantity*quantity + w_subword*subword.
LossBundle total_loss(const Tensor& align, const Tensor& quantity,
                      const Tensor& subword, const LossConfig& config);

}  // namespace wabert::losses
