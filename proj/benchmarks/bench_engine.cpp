// Copyright 2026 The styleswap Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "styleswap/analysis.hpp"
#include "styleswap/attention.hpp"
#include "styleswap/rng.hpp"
#include "styleswap/sampler.hpp"

namespace styleswap {
namespace {

Matrix random_matrix(int r, int c, SplitMix64& rng) {
    Matrix m(r, c);
    for (float& v : m.data) v = static_cast<float>(rng.gaussian());
    return m;
}

void BM_Attention(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0));
    SplitMix64 rng(1);
    const AttentionTensors at{2, 8, random_matrix(tokens, 16, rng), random_matrix(tokens, 16, rng),
                              random_matrix(tokens, 16, rng)};
    for (auto _ : state) benchmark::DoNotOptimize(attention(at));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(64)->Arg(256);

void BM_Forward(benchmark::State& state) {
    DenoiserSpec spec;
    spec.kind = static_cast<DenoiserKind>(state.range(0));
    auto sched = std::make_shared<const Schedule>(make_schedule(50, 0.002, 0.2, 0.0));
    const auto den = build_denoiser(spec, sched);
    const Latent x = Latent::gaussian(4, 16, 16, 3);
    for (auto _ : state) benchmark::DoNotOptimize(den->forward(x, 25, Condition{1, 2}).eps);
    state.SetLabel(std::string(to_string(spec.kind)));
}
BENCHMARK(BM_Forward)->Arg(static_cast<int>(DenoiserKind::seeded_random))->Arg(static_cast<int>(DenoiserKind::structured_style));

void BM_Run(benchmark::State& state) {
    RunConfig cfg;
    cfg.guidance.mode = static_cast<GuidanceMode>(state.range(0));
    cfg.content = Condition{1, std::nullopt};
    cfg.reference.condition = Condition{4, 9};
    auto sched = std::make_shared<const Schedule>(cfg.schedule.build());
    const auto den = build_denoiser(cfg.denoiser, sched);
    for (auto _ : state) benchmark::DoNotOptimize(run_t2i_with_style(cfg, *den, sched).x0);
    state.SetLabel(std::string(to_string(cfg.guidance.mode)));
}
BENCHMARK(BM_Run)
    ->Arg(static_cast<int>(GuidanceMode::plain_cfg))
    ->Arg(static_cast<int>(GuidanceMode::cfg_swap))
    ->Arg(static_cast<int>(GuidanceMode::nvqg_simplified))
    ->Unit(benchmark::kMillisecond);

void BM_KsGaussianity(benchmark::State& state) {
    const Latent z = Latent::gaussian(4, 16, 16, 9);
    for (auto _ : state) benchmark::DoNotOptimize(ks_gaussianity(z.data()));
}
BENCHMARK(BM_KsGaussianity);

}  // namespace
}  // namespace styleswap

BENCHMARK_MAIN();
