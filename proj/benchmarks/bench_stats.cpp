// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "cpaformer/evalstats.hpp"
#include "cpaformer/rng.hpp"

using namespace cpaformer;

static void BM_PairedBootstrap(benchmark::State& state) {
  RngStream rng(1, "bench/boot");
  stats::PairedRunResult r;
  for (int i = 0; i < 500; ++i) {
    const double y = rng.next_uniform(-1, 1);
    r.labels.push_back(y);
    r.pred_a.push_back(y + rng.next_uniform(-0.2, 0.2));
    r.pred_b.push_back(y + rng.next_uniform(-0.3, 0.3));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::paired_bootstrap(
        r, stats::MetricKind::kRmse, static_cast<int>(state.range(0)), 3));
  }
}
BENCHMARK(BM_PairedBootstrap)->Arg(100)->Arg(1000);

static void BM_RocAuc(benchmark::State& state) {
  RngStream rng(2, "bench/auc");
  std::vector<double> scores, labels;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    scores.push_back(rng.next_uniform(0, 1));
    labels.push_back(rng.next_bernoulli(0.4) ? 1.0 : 0.0);
  }
  labels[0] = 1.0;
  labels[1] = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::roc_auc(scores, labels));
  }
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(10000);
