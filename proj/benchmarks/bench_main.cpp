// Copyright 2026 The EPAN Authors. All Rights Reserved.
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

#include <random>
#include <vector>

#include "epan/affine.hpp"
#include "epan/losses.hpp"
#include "epan/model.hpp"
#include "epan/ops.hpp"
#include "epan/optim.hpp"

namespace {

using namespace epan;

template <Real T>
Tensor<T> random(Shape shape, std::uint64_t seed) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : t.mutable_data()) v = static_cast<T>(d(rng));
  return t;
}

// 3x3 stride-1 convolution on a [8, C, S, S] batch; args are C and S.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensorf x = random<float>({8, c, s, s}, 1);
  const Tensorf k = random<float>({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 32})->Args({32, 16})->Args({64, 8});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  Tensorf x = random<float>({8, c, s, s}, 1);
  Tensorf k = random<float>({c, c, 3, 3}, 2);
  x.set_requires_grad(true);
  k.set_requires_grad(true);
  for (auto _ : state) {
    GradientTape<float> tape;
    tape.backward(sum(conv2d(x, k, 1, 1)));
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 32})->Args({64, 8});

// Affine warp of a [16, 3, S, S] batch.
void BM_AffineWarp(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  const Tensorf x = random<float>({16, 3, s, s}, 3);
  std::vector<AffineParams> rows(16, AffineParams::scale_translate(0.8, 0.9, 0.1, -0.05));
  const Tensorf theta = theta_tensor<float>(rows);
  for (auto _ : state) benchmark::DoNotOptimize(affine_warp(x, theta, s, s));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_AffineWarp)->Arg(64)->Arg(224);

// Forward plus backward of the total loss on one 4x4 PK batch of the 64x64
// toy model, followed by an Adam step.
void BM_TrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.num_classes = 10;
  EpanModel<float> model(cfg, 0);
  OptimConfig ocfg;
  Optimizer<float> opt(ocfg, model.parameters());
  const Tensorf images = random<float>({16, 3, 64, 64}, 4);
  std::vector<int> labels;
  for (int id = 0; id < 4; ++id) labels.insert(labels.end(), 4, id);
  const LossConfig loss;
  for (auto _ : state) {
    GradientTape<float> tape;
    opt.zero_grad();
    auto out = model.forward(images, Mode::train);
    tape.backward(total_loss(out.base.logits, out.align.logits, out.fused, labels, loss));
    opt.step(ocfg.learning_rate);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_InferEmbedding(benchmark::State& state) {
  ModelConfig cfg;
  EpanModel<double> model(cfg, 0);
  const Tensord images = random<double>({32, 3, 64, 64}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(model.infer_embedding(images));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_InferEmbedding)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
