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

#include <benchmark/benchmark.h>

#include "wabert/models.hpp"
#include "wabert/synthdata.hpp"
#include "wabert/train.hpp"

using namespace wabert;

namespace {

// Full forward + backward of the alignment objective on one utterance at
// the default model size.
void BM_alignment_forward_backward(benchmark::State& state) {
  synth::SynthConfig synth_config;
  synth_config.seed = 5;
  const auto protos = synth::draw_prototypes(synth_config);
  synth::Utterance utt = synth::make_utterance(synth_config, protos, 0);

  models::ModelConfig model_config;
  model_config.seed = 5;
  model_config.pretrain_steps = 0;
  models::GraftedModel model = models::GraftedModel::init(model_config);
  losses::LossConfig loss_config;

  for (auto _ : state) {
    for (auto& [name, t] : model.trainable_params()) t->zero_grad();
    train::UtteranceForward fwd =
        train::alignment_forward(utt, model, loss_config);
    Tensor total = fwd.bundle.total;
    backward(total);
    benchmark::DoNotOptimize(total.value());
  }
}
BENCHMARK(BM_alignment_forward_backward);

}  // namespace

BENCHMARK_MAIN();
