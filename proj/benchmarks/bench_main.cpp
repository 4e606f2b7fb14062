#include <benchmark/benchmark.h>

#include "tokenwarp/attention.hpp"
#include "tokenwarp/diffusion.hpp"
#include "tokenwarp/synth.hpp"
#include "tokenwarp/warp.hpp"

using namespace tokenwarp;

namespace {

TokenGrid random_grid(int h, int w, int d, std::uint64_t seed) { return gaussian_latent(h, w, d, seed); }

void BM_ScaledDotAttention(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const TokenGrid q = random_grid(side, side, 16, 1);
  const TokenGrid k = random_grid(2 * side, side, 16, 2);
  const TokenGrid v = random_grid(2 * side, side, 16, 3);
  for (auto _ : state) benchmark::DoNotOptimize(scaled_dot_attention(q, k, v, 2));
  state.SetItemsProcessed(state.iterations() * q.tokens() * k.tokens());
}
BENCHMARK(BM_ScaledDotAttention)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_FlowGuidedAttention(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const SceneBundle scene = gen_scene(default_scene());
  const FlowField flow = resize_flow(scene.bwd_flows[0], side, side);
  const OcclusionMask mask = resize_mask(scene.occlusion[0], side, side);
  const TokenGrid q = random_grid(side, side, 16, 1), k = random_grid(side, side, 16, 2),
                  v = random_grid(side, side, 16, 3);
  const LayerTokens prev{random_grid(side, side, 16, 4), random_grid(side, side, 16, 5),
                         random_grid(side, side, 16, 6)};
  const AnchorTokens anchor{random_grid(side, side, 16, 7), random_grid(side, side, 16, 8)};
  const AttentionConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(flow_guided_attention(q, k, v, prev, anchor, flow, mask, cfg, 2));
}
BENCHMARK(BM_FlowGuidedAttention)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_BackwardWarp(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const TokenGrid g = random_grid(side, side, 16, 1);
  const FlowField f = resize_flow(gen_scene(default_scene()).bwd_flows[0], side, side);
  for (auto _ : state) benchmark::DoNotOptimize(backward_warp(g, f));
  state.SetItemsProcessed(state.iterations() * g.tokens());
}
BENCHMARK(BM_BackwardWarp)->Arg(32)->Arg(64)->Arg(128);

void BM_BlockMatch(benchmark::State& state) {
  SceneSpec spec = default_scene();
  spec.height = spec.width = static_cast<int>(state.range(0));
  spec.frames = 2;
  const SceneBundle scene = gen_scene(spec);
  const TokenGrid a = scene.video.frame(0), b = scene.video.frame(1);
  for (auto _ : state) benchmark::DoNotOptimize(block_match_flow(a, b));
}
BENCHMARK(BM_BlockMatch)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_OcclusionEstimate(benchmark::State& state) {
  const SceneBundle scene = gen_scene(default_scene());
  for (auto _ : state) benchmark::DoNotOptimize(estimate_occlusion(scene.bwd_flows[0], scene.fwd_flows[0]));
}
BENCHMARK(BM_OcclusionEstimate);

void BM_ToyDenoiserStep(benchmark::State& state) {
  const DiffusionSchedule schedule = default_schedule();
  const ToyAttentionDenoiser den(3, schedule);
  const TokenGrid z = random_grid(32, 32, 3, 9);
  for (auto _ : state) benchmark::DoNotOptimize(den.predict(z, 500, nullptr));
}
BENCHMARK(BM_ToyDenoiserStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
