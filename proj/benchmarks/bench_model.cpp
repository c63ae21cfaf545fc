// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "cpaformer/features.hpp"
#include "cpaformer/model.hpp"
#include "cpaformer/rng.hpp"
#include "cpaformer/ssl.hpp"
#include "cpaformer/synthetic.hpp"

using namespace cpaformer;

namespace {

model::ModelConfig bench_config(model::AttentionVariant variant) {
  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.model_dim = 32;
  cfg.heads = 2;
  cfg.ffn_dim = 64;
  cfg.k = 3;
  cfg.proj_dim = 32;
  cfg.seed = 7;
  cfg.variant = variant;
  return cfg;
}

void run_forward(benchmark::State& state, model::AttentionVariant variant) {
  const model::ModelConfig cfg = bench_config(variant);
  model::Encoder enc(cfg);
  RngStream rng(3, "bench/model");
  const MolGraph g =
      synthetic::random_molecule(static_cast<int>(state.range(0)), rng);
  const Featurized f =
      featurize(g, FeatureSchema::standard(), CorpusStats{});
  const model::EncoderInput in =
      model::make_encoder_input(g, f, ssl::supports_for(g, cfg), cfg);
  for (auto _ : state) {
    tensor::Tape tape;
    tape.set_grad_enabled(false);
    model::BoundEncoder bound = enc.bind(tape, false);
    benchmark::DoNotOptimize(bound.forward(in));
  }
}

}  // namespace

static void BM_ForwardSoftmaxOnly(benchmark::State& state) {
  run_forward(state, model::AttentionVariant::kSoftmaxOnly);
}
BENCHMARK(BM_ForwardSoftmaxOnly)->Arg(12)->Arg(24)->Arg(48);

static void BM_ForwardCpa(benchmark::State& state) {
  run_forward(state, model::AttentionVariant::kCpa);
}
BENCHMARK(BM_ForwardCpa)->Arg(12)->Arg(24)->Arg(48);
