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

#include "wabert/cif.hpp"
#include "wabert/ops.hpp"
#include "wabert/rng.hpp"

using namespace wabert;

namespace {

void BM_integrate_and_fire(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  cif::FrameSequence frames;
  frames.features = Tensor::zeros({m, 32});
  for (std::size_t i = 0; i < frames.features.numel(); ++i)
    frames.features.at(i) = rng.next_gaussian();
  frames.hop_ms = 20.0;
  cif::AlignmentWeights alpha;
  alpha.alpha = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i)
    alpha.alpha.at(i) = 0.1 + 0.5 * rng.next_uniform();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cif::integrate_and_fire(frames, alpha, {}).aligned.data->data());
  }
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_integrate_and_fire)->Arg(32)->Arg(128)->Arg(512);

void BM_integrate_and_fire_backward(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  for (auto _ : state) {
    state.PauseTiming();
    cif::FrameSequence frames;
    frames.features = Tensor::zeros({m, 32});
    for (std::size_t i = 0; i < frames.features.numel(); ++i)
      frames.features.at(i) = rng.next_gaussian();
    frames.features.set_requires_grad(true);
    frames.hop_ms = 20.0;
    cif::AlignmentWeights alpha;
    alpha.alpha = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i)
      alpha.alpha.at(i) = 0.1 + 0.5 * rng.next_uniform();
    alpha.alpha.set_requires_grad(true);
    state.ResumeTiming();
    Tensor loss = sum_all(cif::integrate_and_fire(frames, alpha, {}).aligned);
    backward(loss);
    benchmark::DoNotOptimize(alpha.alpha.grad->data());
  }
}
BENCHMARK(BM_integrate_and_fire_backward)->Arg(32)->Arg(128);

void BM_extract_boundaries(benchmark::State& state) {
  Rng rng(3);
  const std::size_t m = 128;
  cif::FrameSequence frames;
  frames.features = Tensor::full({m, 8}, 1.0);
  frames.hop_ms = 20.0;
  cif::AlignmentWeights alpha;
  alpha.alpha = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i)
    alpha.alpha.at(i) = 0.1 + 0.5 * rng.next_uniform();
  cif::FiredAlignment fired = cif::integrate_and_fire(frames, alpha, {});
  for (auto _ : state) {
    benchmark::DoNotOptimize(cif::extract_boundaries(fired, 20.0).entries);
  }
}
BENCHMARK(BM_extract_boundaries);

}  // namespace

BENCHMARK_MAIN();
