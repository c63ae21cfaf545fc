// Copyright 2026 The cpaformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "cpaformer/rng.hpp"
#include "cpaformer/tensor.hpp"

using namespace cpaformer;
using namespace cpaformer::tensor;

static Matrix random_matrix(int r, int c, RngStream& rng) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.next_uniform(-1, 1);
  return m;
}

static void BM_MaskedSoftmax(benchmark::State& state) {
  RngStream rng(1, "bench/softmax");
  const int n = static_cast<int>(state.range(0));
  const Matrix logits = random_matrix(n, n, rng);
  Mask mask(static_cast<std::size_t>(n) * n, 1);
  for (auto _ : state) {
    Tape t;
    t.set_grad_enabled(false);
    benchmark::DoNotOptimize(masked_softmax(t.constant(logits), mask));
  }
}
BENCHMARK(BM_MaskedSoftmax)->Arg(8)->Arg(32)->Arg(128);

static void BM_MatmulBackward(benchmark::State& state) {
  RngStream rng(2, "bench/matmul");
  const int n = static_cast<int>(state.range(0));
  const Matrix a = random_matrix(n, n, rng);
  const Matrix b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape t;
    Tensor x = t.leaf(a);
    Tensor y = t.leaf(b);
    Tensor loss = sum_all(matmul(x, y));
    t.backward(loss);
    benchmark::DoNotOptimize(t.grad_of(x));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(8)->Arg(32)->Arg(64);
