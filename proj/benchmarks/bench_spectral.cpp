// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "spectrakv/rng.hpp"
#include "spectrakv/spectral.hpp"

namespace spectrakv {
namespace {

void fill(std::vector<double>& v) {
    Rng rng(7);
    for (auto& x : v) {
        x = rng.normal();
    }
}

void BM_DctForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const DctPlan plan(n);
    std::vector<double> x(n);
    std::vector<double> c(n);
    fill(x);
    for (auto _ : state) {
        plan.forward(x, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DctForward)->RangeMultiplier(2)->Range(64, 16384)->Arg(1000)->Arg(3000)->Complexity();

// Column-block transform over kv_heads * head_dim = 256 channels.
void BM_DctForwardBlock(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t width = 256;
    const DctPlan plan(n);
    std::vector<double> x(n * width);
    std::vector<double> c(n * width);
    fill(x);
    for (auto _ : state) {
        plan.forward_block(x, c, width);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_DctForwardBlock)->RangeMultiplier(2)->Range(256, 8192)->Complexity()->Unit(benchmark::kMillisecond);

} // namespace
} // namespace spectrakv
