/*
 * Copyright 2026 The bsdlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "bsdlab/analysis.hpp"
#include "bsdlab/models.hpp"
#include "bsdlab/targets.hpp"

namespace bsdlab {
namespace {

Matrix random_rows(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> ex(1.0);
  Matrix m(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& v : m.row(i)) s += v = ex(rng);
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

void BM_BsdUpdate(benchmark::State& state) {
  const std::size_t k = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 1024;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % k);
  EvidenceStore store = EvidenceStore::init_prior(labels, k, 1000.0, 0.0, 0.95);
  const Matrix preds = random_rows(n, k, 1);
  std::size_t i = 0;
  for (auto _ : state) {
    store.update(i, preds.row(i));
    i = (i + 1) % n;
  }
  benchmark::DoNotOptimize(store.targets().data().data());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BsdUpdate)->Arg(4)->Arg(10)->Arg(100);

ModelSpec desk_spec() {
  ModelSpec spec;
  spec.input_dim = 2;
  spec.classes = 4;
  spec.hidden = {32, 32};
  spec.seed = 3;
  return spec;
}

void BM_MlpForward(benchmark::State& state) {
  const Model model = init_model(desk_spec());
  const Matrix x = random_rows(static_cast<std::size_t>(state.range(0)), 2, 2);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(16)->Arg(256);

void BM_MlpForwardBackward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Model model = init_model(desk_spec());
  const Matrix x = random_rows(n, 2, 2);
  const Matrix targets = random_rows(n, 4, 4);
  for (auto _ : state) {
    const auto fwd = forward(model, x, nullptr);
    const Matrix dlogits = cross_entropy_logit_grad(fwd.probs, targets, 1.0 / static_cast<double>(n));
    benchmark::DoNotOptimize(backward(model, fwd.cache, dlogits));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(256);

void BM_Ece(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Matrix preds = random_rows(n, 10, 5);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 10);
  for (auto _ : state) benchmark::DoNotOptimize(ece(preds, labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ece)->Arg(1000)->Arg(10000);

}  // namespace
}  // namespace bsdlab

BENCHMARK_MAIN();
