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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wabert/losses.hpp"
#include "wabert/models.hpp"
#include "wabert/synthdata.hpp"

namespace wabert::train {

struct TrainConfig {
  double base_lr = 5e-4;
  std::size_t warmup_steps = 200;
  std::size_t total_steps = 0;  // 0: epochs * ceil(train_size / batch_size)
  std::size_t batch_size = 16;
  std::size_t epochs = 26;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 5.0;
  losses::LossConfig loss;
  std::uint64_t seed = 7;
  // Fine-tuning trains the classifier head only unless this is set. With
  // the acoustic path unfrozen the classification objective no longer
  // constrains the firing rate, so the CIF calibration can drift.
  bool finetune_unfreeze_acoustic = false;
};

std::size_t resolved_total_steps(const TrainConfig& config,
                                 std::size_t train_size);

// Linear warmup to base_lr, then linear decay to zero at total_steps.
double lr_schedule(std::size_t step, const TrainConfig& config);

struct StepRow {
  std::size_t step = 0;
  double align = 0.0, quantity = 0.0, subword = 0.0, total = 0.0, lr = 0.0;
};

struct TrainLog {
  std::vector<StepRow> rows;
  std::string to_csv() const;  // step,align,quantity,subword,total,lr
};

// Decoupled-weight-decay Adam over named parameters.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor*>> params,
        const TrainConfig& config);

  void zero_grad();
  // One update from the accumulated gradients; returns the pre-clip norm.
  double step(double lr);

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, decay_, clip_norm_;
  std::size_t t_ = 0;
};

// Per-utterance Eq-style objective: quantity on unscaled weights, alignment
// between the teacher-forced CIF output and frozen layer-i targets, subword
// cross-entropy through the graft.
struct UtteranceForward {
  losses::LossBundle bundle;
  cif::FiredAlignment fired;
  Tensor targets;  // [N, d_l], no gradient
};

UtteranceForward alignment_forward(const synth::Utterance& utt,
                                   const models::GraftedModel& model,
                                   const losses::LossConfig& loss_config);

// Trains acoustic + predictor parameters against the frozen linguistic
// stack. The model is updated in place. Throws DivergedLoss (restoring the
// last good parameters) if the total loss becomes non-finite.
TrainLog train_align(const std::vector<synth::Utterance>& train_set,
                     models::GraftedModel& model, const TrainConfig& config);

// Cross-entropy fine-tuning of the 3-class head on the inference path;
// linguistic layers stay frozen.
TrainLog finetune_downstream(const std::vector<synth::Utterance>& train_set,
                             models::GraftedModel& model,
                             const TrainConfig& config);

struct EvalReport {
  double mae_ms = 0.0;
  double median_ms = 0.0;
  double acc_50 = 0.0, acc_100 = 0.0, acc_500 = 0.0, acc_1000 = 0.0;
  double diagonality = 0.0;
  double subword_top1 = 0.0;
  double subword_top5 = 0.0;
  std::optional<double> recall_weighted;
  std::optional<double> f1_weighted;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

// Boundary, similarity, subword and (with a classifier) classification
// metrics over a corpus split.
EvalReport evaluate_checkpoint(const std::vector<synth::Utterance>& split,
                               const models::GraftedModel& model);

}  // namespace wabert::train
