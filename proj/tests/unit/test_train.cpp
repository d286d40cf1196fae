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
#include <cstring>

#include "wabert/models.hpp"
#include "wabert/synthdata.hpp"
#include "wabert/train.hpp"

using namespace wabert;

namespace {

// Small corpus/model pair sized so a full test run stays under a second.
synth::SynthConfig small_synth(std::uint64_t seed) {
  synth::SynthConfig cfg;
  cfg.vocab = 16;
  cfg.d_in = 6;
  cfg.tokens_per_utt_min = 3;
  cfg.tokens_per_utt_max = 6;
  cfg.seed = seed;
  return cfg;
}

models::ModelConfig small_model(std::uint64_t seed) {
  models::ModelConfig cfg;
  cfg.d_in = 6;
  cfg.d_model = 12;
  cfg.d_ff = 24;
  cfg.vocab = 16;
  cfg.layers = 12;
  cfg.graft_depth = 3;
  cfg.pretrain_steps = 300;
  cfg.seed = seed;
  return cfg;
}

std::vector<synth::Utterance> small_corpus(std::size_t count,
                                           std::uint64_t seed) {
  synth::SynthConfig cfg = small_synth(seed);
  const auto protos = synth::draw_prototypes(cfg);
  std::vector<synth::Utterance> corpus;
  for (std::size_t i = 0; i < count; ++i) {
    corpus.push_back(synth::make_utterance(cfg, protos, i));
  }
  return corpus;
}

train::TrainConfig quick_train(std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.warmup_steps = 2;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule values and continuity") {
  train::TrainConfig cfg;
  cfg.base_lr = 5e-4;
  cfg.warmup_steps = 200;
  cfg.total_steps = 1000;

  CHECK(train::lr_schedule(0, cfg) == 0.0);
  CHECK(train::lr_schedule(200, cfg) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(train::lr_schedule(600, cfg) ==
        doctest::Approx(5e-4 * (1000.0 - 600.0) / 800.0).epsilon(1e-12));
  CHECK(train::lr_schedule(1000, cfg) == 0.0);

  // Left and right limits agree at the warmup boundary.
  const double left = train::lr_schedule(200, cfg);
  train::TrainConfig fine = cfg;
  const double right =
      fine.base_lr * (1000.0 - 200.0) / (1000.0 - 200.0);
  CHECK(std::fabs(left - right) < 1e-15);

  CHECK_THROWS_AS(train::lr_schedule(1001, cfg), StepOutOfRange);
  train::TrainConfig bad = cfg;
  bad.total_steps = 100;
  CHECK_THROWS_AS(train::lr_schedule(50, bad), ConfigError);
}

TEST_CASE("resolved_total_steps uses epochs times batches") {
  train::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 26;
  CHECK(train::resolved_total_steps(cfg, 400) == 26 * 25);
  CHECK(train::resolved_total_steps(cfg, 401) == 26 * 26);
  cfg.total_steps = 77;
  CHECK(train::resolved_total_steps(cfg, 400) == 77);
}

TEST_CASE("AdamW with zero gradients and zero decay is a no-op") {
  Tensor p = Tensor::from({1.0, -2.0, 3.0}, {3});
  p.set_requires_grad(true);
  p.zero_grad();
  train::TrainConfig cfg;
  cfg.weight_decay = 0.0;
  train::AdamW opt({{"p", &p}}, cfg);
  opt.step(1e-3);
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == -2.0);
  CHECK(p.at(2) == 3.0);
}

TEST_CASE("AdamW clips the global gradient norm") {
  Tensor p = Tensor::from({0.0, 0.0}, {2});
  p.set_requires_grad(true);
  p.zero_grad();
  (*p.grad)[0] = 30.0;
  (*p.grad)[1] = 40.0;  // norm 50
  train::TrainConfig cfg;
  cfg.clip_norm = 5.0;
  train::AdamW opt({{"p", &p}}, cfg);
  CHECK(opt.step(1e-3) == doctest::Approx(50.0));
}

TEST_CASE("one training step updates the acoustic path and nothing frozen") {
  auto corpus = small_corpus(8, 3);
  models::GraftedModel model = models::GraftedModel::init(small_model(3));

  const std::uint64_t frozen_before = model.linguistic.checksum();
  std::vector<std::vector<double>> acoustic_before;
  for (auto& [name, t] : model.acoustic.params())
    acoustic_before.push_back(*t->data);

  train::TrainConfig cfg = quick_train(3);
  cfg.epochs = 1;
  cfg.warmup_steps = 0;
  cfg.total_steps = 2;  // one batch executes; the schedule endpoint is later
  train::TrainLog log = train::train_align(corpus, model, cfg);
  CHECK(log.rows.size() == 1);

  CHECK(model.linguistic.checksum() == frozen_before);
  bool changed = false;
  std::size_t idx = 0;
  for (auto& [name, t] : model.acoustic.params()) {
    changed = changed ||
              std::memcmp(acoustic_before[idx].data(), t->data->data(),
                          t->numel() * sizeof(double)) != 0;
    ++idx;
  }
  CHECK(changed);
}

TEST_CASE("training is deterministic: identical seeds give identical logs") {
  auto corpus = small_corpus(16, 4);
  models::GraftedModel a = models::GraftedModel::init(small_model(4));
  models::GraftedModel b = models::GraftedModel::init(small_model(4));
  train::TrainLog log_a = train::train_align(corpus, a, quick_train(4));
  train::TrainLog log_b = train::train_align(corpus, b, quick_train(4));
  CHECK(log_a.to_csv() == log_b.to_csv());

  auto pa = a.all_params();
  auto pb = b.all_params();
  CHECK(models::params_checksum(pa) == models::params_checksum(pb));
}

TEST_CASE("training reduces the loss on a noiseless corpus") {
  synth::SynthConfig synth_cfg = small_synth(5);
  synth_cfg.noise_sigma = 0.0;
  const auto protos = synth::draw_prototypes(synth_cfg);
  std::vector<synth::Utterance> corpus;
  for (std::size_t i = 0; i < 48; ++i)
    corpus.push_back(synth::make_utterance(synth_cfg, protos, i));

  models::GraftedModel model = models::GraftedModel::init(small_model(5));
  train::TrainConfig cfg = quick_train(5);
  cfg.batch_size = 8;
  cfg.epochs = 50;
  cfg.total_steps = 300;
  cfg.warmup_steps = 30;
  train::TrainLog log = train::train_align(corpus, model, cfg);
  REQUIRE(log.rows.size() == 300);

  CHECK(log.rows.back().total < log.rows.front().total);

  double first50 = 0.0, last50 = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    first50 += log.rows[i].total;
    last50 += log.rows[log.rows.size() - 1 - i].total;
  }
  CHECK(last50 < first50);

  // The log carries one row per executed step with the scheduled rate.
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    CHECK(log.rows[i].step == i + 1);
    CHECK(log.rows[i].lr == train::lr_schedule(i + 1, cfg));
  }
}

TEST_CASE("non-finite loss aborts with DivergedLoss and restores weights") {
  auto corpus = small_corpus(8, 6);
  models::GraftedModel model = models::GraftedModel::init(small_model(6));
  // Poison the frozen targets: every alignment loss turns NaN while the
  // token counts stay intact.
  model.linguistic.embedding.at(0, 0) = std::nan("");
  train::TrainConfig cfg = quick_train(6);
  CHECK_THROWS_AS(train::train_align(corpus, model, cfg), DivergedLoss);
  // Trainable parameters are back at their last good values.
  CHECK(model.acoustic.conv1_w.all_finite());
}

TEST_CASE("train_align rejects an empty corpus") {
  models::GraftedModel model = models::GraftedModel::init(small_model(7));
  CHECK_THROWS_AS(train::train_align({}, model, quick_train(7)), ConfigError);
}

TEST_CASE("classifier head starts near chance on a balanced set") {
  auto corpus = small_corpus(240, 8);
  models::GraftedModel model = models::GraftedModel::init(small_model(8));
  Rng rng(8);
  model.classifier = models::ClassifierHead::init(12, rng);

  // Balance the evaluation set by trimming to equal class counts.
  std::vector<synth::Utterance> balanced;
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& utt : corpus) {
    if (counts[utt.label] < 30) {
      ++counts[utt.label];
      balanced.push_back(utt);
    }
  }
  REQUIRE(balanced.size() == 90);
  train::EvalReport report = train::evaluate_checkpoint(balanced, model);
  REQUIRE(report.recall_weighted.has_value());
  CHECK(*report.recall_weighted == doctest::Approx(1.0 / 3.0).epsilon(0.35));
}

TEST_CASE("head-only fine-tuning still reduces the classification loss") {
  auto corpus = small_corpus(64, 9);
  models::GraftedModel model = models::GraftedModel::init(small_model(9));
  // Calibrate the weight predictor first; fine-tuning runs the unscaled
  // inference path, which needs a sane firing rate.
  train::TrainConfig align_cfg = quick_train(9);
  align_cfg.epochs = 6;
  train::train_align(corpus, model, align_cfg);

  train::TrainConfig cfg = quick_train(9);
  cfg.epochs = 12;
  cfg.warmup_steps = 5;
  cfg.finetune_unfreeze_acoustic = false;
  train::TrainLog log = train::finetune_downstream(corpus, model, cfg);
  REQUIRE(log.rows.size() > 20);
  double first10 = 0.0, last10 = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first10 += log.rows[i].total;
    last10 += log.rows[log.rows.size() - 1 - i].total;
  }
  CHECK(last10 < first10);
  // Head-only training leaves the acoustic path trainable again afterwards.
  for (auto& [name, t] : model.acoustic.params()) CHECK(t->requires_grad);
}

TEST_CASE("evaluation reports are deterministic for a fixed checkpoint") {
  auto corpus = small_corpus(24, 10);
  models::GraftedModel model = models::GraftedModel::init(small_model(10));
  train::EvalReport a = train::evaluate_checkpoint(corpus, model);
  train::EvalReport b = train::evaluate_checkpoint(corpus, model);
  CHECK(a.to_json() == b.to_json());
  CHECK_FALSE(a.recall_weighted.has_value());

  train::EvalReport parsed = train::EvalReport::from_json(a.to_json());
  CHECK(parsed.mae_ms == a.mae_ms);
  CHECK(parsed.subword_top5 == a.subword_top5);
  CHECK(parsed.subword_top5 >= parsed.subword_top1);
}

TEST_CASE("train log csv format") {
  train::TrainLog log;
  log.rows.push_back({1, 0.5, 0.25, 1.5, 2.25, 1e-4});
  const std::string csv = log.to_csv();
  CHECK(csv == "step,align,quantity,subword,total,lr\n"
               "1,0.5,0.25,1.5,2.25,0.0001\n");
}
