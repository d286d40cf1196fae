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

#include "wabert/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "wabert/evalmetrics.hpp"
#include "wabert/ops.hpp"
#include "wabert/rng.hpp"

namespace wabert::train {

std::size_t resolved_total_steps(const TrainConfig& config,
                                 std::size_t train_size) {
  if (config.total_steps > 0) return config.total_steps;
  const std::size_t batches =
      (train_size + config.batch_size - 1) / config.batch_size;
  return config.epochs * batches;
}

double lr_schedule(std::size_t step, const TrainConfig& config) {
  const std::size_t total = config.total_steps;
  if (total == 0 || config.warmup_steps >= total) {
    throw ConfigError("lr_schedule: need warmup_steps < total_steps");
  }
  if (step > total) {
    throw StepOutOfRange("lr_schedule: step " + std::to_string(step) +
                         " > total " + std::to_string(total));
  }
  if (step <= config.warmup_steps) {
    return config.base_lr * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  }
  return config.base_lr * static_cast<double>(total - step) /
         static_cast<double>(total - config.warmup_steps);
}

std::string TrainLog::to_csv() const {
  std::string out = "step,align,quantity,subword,total,lr\n";
  char line[192];
  for (const StepRow& r : rows) {
    std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  r.step, r.align, r.quantity, r.subword, r.total, r.lr);
    out += line;
  }
  return out;
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor*>> params,
             const TrainConfig& config)
    : params_(std::move(params)),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_eps),
      decay_(config.weight_decay),
      clip_norm_(config.clip_norm) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].second->numel(), 0.0);
    v_[i].assign(params_[i].second->numel(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& [name, t] : params_) t->zero_grad();
}

double AdamW::step(double lr) {
  ++t_;
  double norm_sq = 0.0;
  for (auto& [name, t] : params_) {
    t->ensure_grad();
    for (double g : *t->grad) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale =
      (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i].second;
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = (*p.grad)[j] * scale;
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][j] / c1;
      const double vhat = v_[i][j] / c2;
      p.at(j) -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay_ * p.at(j));
    }
  }
  return norm;
}

UtteranceForward alignment_forward(const synth::Utterance& utt,
                                   const models::GraftedModel& model,
                                   const losses::LossConfig& loss_config) {
  const std::size_t n = utt.token_ids.size();
  cif::FrameSequence frames = models::encode_acoustic(
      utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
  cif::AlignmentWeights alpha = cif::predict_weights(frames, model.predictor);
  Tensor quantity = cif::quantity_loss(alpha, n);
  cif::AlignmentWeights scaled = cif::scale_weights(alpha, n);

  UtteranceForward fwd;
  fwd.fired = cif::integrate_and_fire(frames, scaled, model.cif_config);
  fwd.targets =
      model.linguistic.layer_output(utt.token_ids, model.graft_depth);

  Tensor align;
  if (loss_config.align_mode == losses::AlignMode::Cosine) {
    align = losses::cosine_align_loss(fwd.fired.aligned, fwd.targets,
                                      loss_config.cosine_reduction);
  } else {
    align = losses::aligned_token_similarity_loss(fwd.fired.aligned,
                                                  fwd.targets, loss_config.tau);
  }
  models::GraftOutput graft = models::graft_forward(fwd.fired.aligned, model);
  Tensor subword = softmax_cross_entropy(graft.logits, utt.token_ids);
  fwd.bundle = losses::total_loss(align, quantity, subword, loss_config);
  return fwd;
}

namespace {

std::vector<std::vector<double>> snapshot_params(
    std::vector<std::pair<std::string, Tensor*>>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (auto& [name, t] : params) out.push_back(*t->data);
  return out;
}

void restore_params(std::vector<std::pair<std::string, Tensor*>>& params,
                    const std::vector<std::vector<double>>& snapshot) {
  for (std::size_t i = 0; i < params.size(); ++i)
    *params[i].second->data = snapshot[i];
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(
        rng.next_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainLog train_align(const std::vector<synth::Utterance>& train_set,
                     models::GraftedModel& model, const TrainConfig& config) {
  if (train_set.empty()) throw ConfigError("train_align: empty corpus");
  TrainConfig cfg = config;
  cfg.total_steps = resolved_total_steps(config, train_set.size());

  auto trainable = model.trainable_params();
  AdamW optimizer(trainable, cfg);
  const std::uint64_t pre_checksum = model.linguistic.checksum();

  TrainLog log;
  std::vector<std::vector<double>> last_good = snapshot_params(trainable);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs && step < cfg.total_steps;
       ++epoch) {
    Rng rng(Rng::derive(cfg.seed, 0xe70c + epoch));
    const std::vector<std::size_t> order =
        shuffled_indices(train_set.size(), rng);
    for (std::size_t start = 0;
         start < order.size() && step < cfg.total_steps;
         start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ++step;
      optimizer.zero_grad();

      std::vector<Tensor> totals;
      double align_sum = 0.0, quantity_sum = 0.0, subword_sum = 0.0;
      std::vector<Tensor> batch_aligned, batch_targets, batch_quantities,
          batch_subwords;
      const bool pooled_negatives =
          cfg.loss.cross_utterance_negatives &&
          cfg.loss.align_mode == losses::AlignMode::InfoNce;
      Tensor batch_total;
      const double batch_count = static_cast<double>(end - start);

      try {
      for (std::size_t b = start; b < end; ++b) {
        const synth::Utterance& utt = train_set[order[b]];
        if (pooled_negatives) {
          cif::FrameSequence frames = models::encode_acoustic(
              utt.raw_frames, utt.raw_hop_ms, utt.utterance_id,
              model.acoustic);
          cif::AlignmentWeights alpha =
              cif::predict_weights(frames, model.predictor);
          Tensor quantity = cif::quantity_loss(alpha, utt.token_ids.size());
          cif::AlignmentWeights scaled =
              cif::scale_weights(alpha, utt.token_ids.size());
          cif::FiredAlignment fired =
              cif::integrate_and_fire(frames, scaled, model.cif_config);
          models::GraftOutput graft =
              models::graft_forward(fired.aligned, model);
          batch_aligned.push_back(fired.aligned);
          batch_targets.push_back(
              model.linguistic.layer_output(utt.token_ids, model.graft_depth));
          batch_quantities.push_back(quantity);
          batch_subwords.push_back(
              softmax_cross_entropy(graft.logits, utt.token_ids));
        } else {
          UtteranceForward fwd = alignment_forward(utt, model, cfg.loss);
          totals.push_back(fwd.bundle.total);
          align_sum += fwd.bundle.align_value();
          quantity_sum += fwd.bundle.quantity_value();
          subword_sum += fwd.bundle.subword_value();
        }
      }

      if (pooled_negatives) {
        Tensor align = losses::aligned_token_similarity_loss(
            concat_rows(batch_aligned), concat_rows(batch_targets),
            cfg.loss.tau);
        Tensor quantity = Tensor::scalar(0.0);
        for (const Tensor& q : batch_quantities)
          quantity = add(quantity, q);
        quantity = mul_scalar(quantity, 1.0 / batch_count);
        Tensor subword = Tensor::scalar(0.0);
        for (const Tensor& s : batch_subwords) subword = add(subword, s);
        subword = mul_scalar(subword, 1.0 / batch_count);
        losses::LossBundle bundle =
            losses::total_loss(align, quantity, subword, cfg.loss);
        batch_total = bundle.total;
        align_sum = bundle.align_value() * batch_count;
        quantity_sum = bundle.quantity_value() * batch_count;
        subword_sum = bundle.subword_value() * batch_count;
      } else {
        batch_total = Tensor::scalar(0.0);
        for (const Tensor& t : totals) batch_total = add(batch_total, t);
        batch_total = mul_scalar(batch_total, 1.0 / batch_count);
      }
      } catch (const NonFiniteComponent&) {
        restore_params(trainable, last_good);
        throw DivergedLoss("train_align: non-finite loss at step " +
                           std::to_string(step));
      }

      if (!std::isfinite(batch_total.value())) {
        restore_params(trainable, last_good);
        throw DivergedLoss("train_align: non-finite loss at step " +
                           std::to_string(step));
      }
      backward(batch_total);
      const double lr = lr_schedule(step, cfg);
      optimizer.step(lr);
      last_good = snapshot_params(trainable);

      StepRow row;
      row.step = step;
      row.align = align_sum / batch_count;
      row.quantity = quantity_sum / batch_count;
      row.subword = subword_sum / batch_count;
      row.total = batch_total.value();
      row.lr = lr;
      log.rows.push_back(row);
    }
  }

  if (model.linguistic.checksum() != pre_checksum) {
    throw NonFiniteComponent("train_align: frozen parameters changed");
  }
  return log;
}

TrainLog finetune_downstream(const std::vector<synth::Utterance>& train_set,
                             models::GraftedModel& model,
                             const TrainConfig& config) {
  if (train_set.empty()) throw ConfigError("finetune_downstream: empty corpus");
  if (!model.classifier) {
    Rng rng(model.config.seed + 1);
    model.classifier = models::ClassifierHead::init(model.linguistic.d_l, rng);
  }
  TrainConfig cfg = config;
  cfg.total_steps = resolved_total_steps(config, train_set.size());

  std::vector<std::pair<std::string, Tensor*>> trainable =
      model.classifier->params();
  // The weight predictor stays fixed either way: pure cross-entropy puts no
  // constraint on the firing rate, so letting it move would destroy the
  // CIF calibration learned during alignment.
  for (auto& [name, t] : model.predictor.params()) t->set_requires_grad(false);
  if (cfg.finetune_unfreeze_acoustic) {
    for (auto& p : model.acoustic.params()) trainable.push_back(p);
  } else {
    for (auto& [name, t] : model.acoustic.params()) t->set_requires_grad(false);
  }
  AdamW optimizer(trainable, cfg);

  TrainLog log;
  std::vector<std::vector<double>> last_good = snapshot_params(trainable);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < cfg.total_steps;
       ++epoch) {
    Rng rng(Rng::derive(cfg.seed, 0xf17e + epoch));
    const std::vector<std::size_t> order =
        shuffled_indices(train_set.size(), rng);
    for (std::size_t start = 0;
         start < order.size() && step < cfg.total_steps;
         start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      ++step;
      optimizer.zero_grad();

      Tensor batch_total = Tensor::scalar(0.0);
      for (std::size_t b = start; b < end; ++b) {
        const synth::Utterance& utt = train_set[order[b]];
        cif::FrameSequence frames = models::encode_acoustic(
            utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
        cif::AlignmentWeights alpha =
            cif::predict_weights(frames, model.predictor);
        cif::FiredAlignment fired =
            cif::integrate_and_fire(frames, alpha, model.cif_config);
        models::GraftOutput graft = models::graft_forward(fired.aligned, model);
        Tensor logits = model.classifier->forward(graft.top_states);
        Tensor loss = softmax_cross_entropy(
            logits, {static_cast<std::size_t>(utt.label)});
        if (cfg.finetune_unfreeze_acoustic) {
          // Rate anchor: with the encoder free, cross-entropy alone puts no
          // constraint on the firing rate and the aligner drifts until no
          // token fires at all.
          loss = add(loss, mul_scalar(cif::quantity_loss(
                                          alpha, utt.token_ids.size()),
                                      cfg.loss.w_quantity));
        }
        batch_total = add(batch_total, loss);
      }
      batch_total =
          mul_scalar(batch_total, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(batch_total.value())) {
        restore_params(trainable, last_good);
        throw DivergedLoss("finetune_downstream: non-finite loss at step " +
                           std::to_string(step));
      }
      backward(batch_total);
      const double lr = lr_schedule(step, cfg);
      optimizer.step(lr);
      last_good = snapshot_params(trainable);

      StepRow row;
      row.step = step;
      row.total = batch_total.value();
      row.lr = lr;
      log.rows.push_back(row);
    }
  }

  for (auto& [name, t] : model.predictor.params()) t->set_requires_grad(true);
  if (!cfg.finetune_unfreeze_acoustic) {
    for (auto& [name, t] : model.acoustic.params()) t->set_requires_grad(true);
  }
  return log;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mae_ms"] = mae_ms;
  j["median_ms"] = median_ms;
  j["acc_50"] = acc_50;
  j["acc_100"] = acc_100;
  j["acc_500"] = acc_500;
  j["acc_1000"] = acc_1000;
  j["diagonality"] = diagonality;
  j["subword_top1"] = subword_top1;
  j["subword_top5"] = subword_top5;
  j["recall_weighted"] =
      recall_weighted ? nlohmann::json(*recall_weighted) : nlohmann::json();
  j["f1_weighted"] =
      f1_weighted ? nlohmann::json(*f1_weighted) : nlohmann::json();
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw CorruptFile("metrics report is not valid");
  EvalReport r;
  r.mae_ms = j.at("mae_ms").get<double>();
  r.median_ms = j.at("median_ms").get<double>();
  r.acc_50 = j.at("acc_50").get<double>();
  r.acc_100 = j.at("acc_100").get<double>();
  r.acc_500 = j.at("acc_500").get<double>();
  r.acc_1000 = j.at("acc_1000").get<double>();
  r.diagonality = j.at("diagonality").get<double>();
  r.subword_top1 = j.at("subword_top1").get<double>();
  r.subword_top5 = j.at("subword_top5").get<double>();
  if (!j.at("recall_weighted").is_null())
    r.recall_weighted = j.at("recall_weighted").get<double>();
  if (!j.at("f1_weighted").is_null())
    r.f1_weighted = j.at("f1_weighted").get<double>();
  return r;
}

EvalReport evaluate_checkpoint(const std::vector<synth::Utterance>& split,
                               const models::GraftedModel& model) {
  if (split.empty()) throw ConfigError("evaluate_checkpoint: empty split");

  std::vector<double> pooled_errors;
  double diagonality_sum = 0.0;
  std::size_t top1_hits = 0, top5_hits = 0, token_count = 0;
  std::vector<std::vector<std::size_t>> confusion(
      3, std::vector<std::size_t>(3, 0));

  for (const synth::Utterance& utt : split) {
    const std::size_t n = utt.token_ids.size();
    cif::FrameSequence frames = models::encode_acoustic(
        utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
    cif::AlignmentWeights alpha = cif::predict_weights(frames, model.predictor);
    cif::AlignmentWeights scaled = cif::scale_weights(alpha, n);
    cif::FiredAlignment fired =
        cif::integrate_and_fire(frames, scaled, model.cif_config);

    cif::BoundarySet pred = cif::extract_boundaries(fired, frames.hop_ms);
    evalm::BoundarySummary summary =
        evalm::boundary_errors(pred, utt.gold_boundaries);
    pooled_errors.insert(pooled_errors.end(),
                         summary.errors.pooled_abs.begin(),
                         summary.errors.pooled_abs.end());

    Tensor targets =
        model.linguistic.layer_output(utt.token_ids, model.graft_depth);
    diagonality_sum += evalm::diagonality_score(
        evalm::similarity_heatmap(fired.aligned, targets));

    models::GraftOutput graft = models::graft_forward(fired.aligned, model);
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<std::size_t> top5 =
          models::top5_candidates(graft.logits, i);
      if (top5[0] == utt.token_ids[i]) ++top1_hits;
      if (std::find(top5.begin(), top5.end(), utt.token_ids[i]) != top5.end())
        ++top5_hits;
      ++token_count;
    }

    if (model.classifier) {
      models::InferenceResult inf = models::inference_forward(
          utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model);
      std::size_t predicted = 0;
      for (std::size_t c = 1; c < 3; ++c) {
        if (inf.class_probs[c] > inf.class_probs[predicted]) predicted = c;
      }
      confusion[static_cast<std::size_t>(utt.label)][predicted] += 1;
    }
  }

  EvalReport report;
  double total = 0.0;
  for (double e : pooled_errors) total += e;
  report.mae_ms = total / static_cast<double>(pooled_errors.size());
  std::vector<double> sorted = pooled_errors;
  std::sort(sorted.begin(), sorted.end());
  report.median_ms = sorted[(sorted.size() - 1) / 2];

  const evalm::ToleranceReport tol = evalm::tolerance_accuracy(
      pooled_errors, {evalm::kDefaultCutoffsMs.begin(),
                      evalm::kDefaultCutoffsMs.end()});
  report.acc_50 = tol.accuracy[0];
  report.acc_100 = tol.accuracy[1];
  report.acc_500 = tol.accuracy[2];
  report.acc_1000 = tol.accuracy[3];
  report.diagonality = diagonality_sum / static_cast<double>(split.size());
  report.subword_top1 =
      static_cast<double>(top1_hits) / static_cast<double>(token_count);
  report.subword_top5 =
      static_cast<double>(top5_hits) / static_cast<double>(token_count);
  if (model.classifier) {
    const evalm::ClassificationScores scores =
        evalm::classification_scores(confusion);
    report.recall_weighted = scores.weighted_recall;
    report.f1_weighted = scores.weighted_f1;
  }
  return report;
}

}  // namespace wabert::train
