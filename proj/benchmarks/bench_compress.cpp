// Copyright 2026 The spectrakv Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "spectrakv/cache.hpp"
#include "spectrakv/synth.hpp"

namespace spectrakv {
namespace {

KvDump make_dump(std::size_t n, std::size_t layers) {
    SynthSpec s;
    s.num_layers = layers;
    s.kv_heads = 2;
    s.head_dim = 128;
    s.seq_len = n;
    s.seed = 11;
    return generate(s).dump;
}

void BM_CompressSingleLayer(benchmark::State& state) {
    const KvDump dump = make_dump(static_cast<std::size_t>(state.range(0)), 1);
    CompressionConfig c;
    c.rho = 0.2;
    for (auto _ : state) {
        auto result = compress(dump, c);
        benchmark::DoNotOptimize(result);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CompressSingleLayer)->RangeMultiplier(2)->Range(512, 8192)->Complexity()->Unit(benchmark::kMillisecond);

void BM_CompressThreads(benchmark::State& state) {
    const KvDump dump = make_dump(2048, 8);
    CompressionConfig c;
    c.rho = 0.2;
    c.threads = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto result = compress(dump, c);
        benchmark::DoNotOptimize(result);
    }
}
BENCHMARK(BM_CompressThreads)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_EvaluatePlan(benchmark::State& state) {
    const KvDump dump = make_dump(static_cast<std::size_t>(state.range(0)), 1);
    CompressionConfig c;
    c.rho = 0.2;
    const auto plan = compress(dump, c).plan;
    const QueryMatrix q = random_queries(16, 256, 3);
    for (auto _ : state) {
        auto m = evaluate_plan(dump, plan, &q);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(BM_EvaluatePlan)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

} // namespace
} // namespace spectrakv

BENCHMARK_MAIN();
