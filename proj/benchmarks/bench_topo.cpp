// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "cpaformer/rng.hpp"
#include "cpaformer/synthetic.hpp"
#include "cpaformer/topo.hpp"

using namespace cpaformer;

static void BM_AllPairsSpd(benchmark::State& state) {
  RngStream rng(1, "bench/spd");
  const MolGraph g = synthetic::random_topology(
      static_cast<int>(state.range(0)), static_cast<int>(state.range(0) / 4),
      rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(topo::all_pairs_spd(g));
  }
}
BENCHMARK(BM_AllPairsSpd)->Arg(16)->Arg(64)->Arg(256);

static void BM_TruncatedSpd(benchmark::State& state) {
  RngStream rng(2, "bench/trunc");
  const MolGraph g = synthetic::random_topology(
      static_cast<int>(state.range(0)), static_cast<int>(state.range(0) / 4),
      rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(topo::truncated_spd(g, 3));
  }
}
BENCHMARK(BM_TruncatedSpd)->Arg(16)->Arg(64)->Arg(256);

static void BM_PathEdgeFeatures(benchmark::State& state) {
  RngStream rng(3, "bench/path");
  const MolGraph g = synthetic::random_topology(32, 8, rng);
  const topo::SpdMatrix spd = topo::all_pairs_spd(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(topo::shortest_path_edge_features(g, spd));
  }
}
BENCHMARK(BM_PathEdgeFeatures);
