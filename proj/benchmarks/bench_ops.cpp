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

#include "wabert/ops.hpp"
#include "wabert/rng.hpp"

using namespace wabert;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.next_gaussian();
  return t;
}

void BM_matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b).data->data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(32)->Arg(64);

void BM_conv1d(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor x = random_tensor({m, 32}, rng);
  Tensor w = random_tensor({3, 32, 32}, rng);
  Tensor b = random_tensor({32}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1d(x, w, b, 1, 1).data->data());
  }
}
BENCHMARK(BM_conv1d)->Arg(16)->Arg(64)->Arg(256);

void BM_layer_norm(benchmark::State& state) {
  Rng rng(3);
  Tensor x = random_tensor({64, 32}, rng);
  Tensor g = Tensor::full({32}, 1.0);
  Tensor b = Tensor::zeros({32});
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer_norm(x, g, b).data->data());
  }
}
BENCHMARK(BM_layer_norm);

void BM_softmax_xent_backward(benchmark::State& state) {
  Rng rng(4);
  std::vector<std::size_t> ids(32, 5);
  for (auto _ : state) {
    state.PauseTiming();
    Tensor logits = random_tensor({32, 32}, rng);
    logits.set_requires_grad(true);
    state.ResumeTiming();
    Tensor loss = softmax_cross_entropy(logits, ids);
    backward(loss);
    benchmark::DoNotOptimize(logits.grad->data());
  }
}
BENCHMARK(BM_softmax_xent_backward);

}  // namespace

BENCHMARK_MAIN();
