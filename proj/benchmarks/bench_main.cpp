#include <benchmark/benchmark.h>

#include <random>

#include "adamhf/fusion.hpp"
#include "adamhf/model.hpp"
#include "adamhf/runner.hpp"

using namespace adamhf;

namespace {

SampleBag probe_bag(int n_p, int d) {
  SampleBag bag;
  bag.sample_id = "bench";
  bag.n_p = n_p;
  bag.n_g = 6;
  bag.d = d;
  bag.t = 1;
  bag.c = 0;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0.0, 1.0);
  bag.x_p.resize(static_cast<size_t>(n_p) * d);
  bag.x_g.resize(static_cast<size_t>(6) * d);
  for (auto& v : bag.x_p) v = static_cast<float>(dist(rng));
  for (auto& v : bag.x_g) v = static_cast<float>(dist(rng));
  return bag;
}

void BM_MatMul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  auto a = randn_tensor<float>({n, n}, rng, 1.0);
  auto b = randn_tensor<float>({n, n}, rng, 1.0);
  for (auto _ : state) {
    auto c = matmul(a, b);
    benchmark::DoNotOptimize(c.value().data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(32)->Arg(64)->Arg(128);

void BM_ForwardFull(benchmark::State& state) {
  RunConfig cfg;
  auto model = AdaMhfModel<float>::assemble(cfg);
  auto bag = probe_bag(static_cast<int>(state.range(0)), cfg.d_model);
  auto in = to_input<float>(bag, EvalMode::Full);
  for (auto _ : state) {
    auto out = model.forward(in);
    benchmark::DoNotOptimize(out.hazards.value().data());
  }
}
BENCHMARK(BM_ForwardFull)->Arg(64)->Arg(256)->Arg(1024);

void BM_ForwardNoAtsa(benchmark::State& state) {
  RunConfig cfg;
  auto model = AdaMhfModel<float>::assemble(cfg);
  auto bag = probe_bag(static_cast<int>(state.range(0)), cfg.d_model);
  auto in = to_input<float>(bag, EvalMode::Full);
  AblationFlags ab;
  ab.no_atsa = true;
  for (auto _ : state) {
    auto out = model.forward(in, ab);
    benchmark::DoNotOptimize(out.hazards.value().data());
  }
}
BENCHMARK(BM_ForwardNoAtsa)->Arg(64)->Arg(256)->Arg(1024);

void BM_LowRankFuse(benchmark::State& state) {
  const int len = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  ParamStore<float> ps;
  auto p = LowRankFusionParams<float>::init(ps, "lmf", len, len, 4, 16, rng);
  auto a = randn_tensor<float>({len}, rng, 1.0);
  auto b = randn_tensor<float>({len}, rng, 1.0);
  for (auto _ : state) {
    auto out = low_rank_fuse(a, b, p);
    benchmark::DoNotOptimize(out.value().data());
  }
}
BENCHMARK(BM_LowRankFuse)->Arg(17)->Arg(65)->Arg(257);

void BM_ExplicitBilinear(benchmark::State& state) {
  const int len = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<float> a(len), b(len), w(static_cast<size_t>(len) * len * 16),
      bias(16, 0.f);
  for (auto& v : a) v = static_cast<float>(dist(rng));
  for (auto& v : b) v = static_cast<float>(dist(rng));
  for (auto& v : w) v = static_cast<float>(dist(rng));
  for (auto _ : state) {
    auto out = explicit_bilinear_fuse(a, b, w, bias);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ExplicitBilinear)->Arg(17)->Arg(65)->Arg(257);

}  // namespace

BENCHMARK_MAIN();
