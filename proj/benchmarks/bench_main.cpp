#include <benchmark/benchmark.h>

#include <array>
#include <random>

#include "gfm/batch.hpp"
#include "gfm/ged.hpp"
#include "gfm/model.hpp"
#include "gfm/ops.hpp"
#include "gfm/synthetic.hpp"

namespace {

constexpr std::size_t kAlphabet = 4;

gfm::PairBatch pair_batch(std::size_t n) {
  static const auto alphabet = gfm::synthetic_alphabet(kAlphabet);
  std::mt19937_64 rng(n);
  const gfm::Graph gi = gfm::random_connected_graph(rng, 0, n, alphabet);
  const gfm::Graph gj = gfm::random_connected_graph(rng, 1, n, alphabet);
  const std::array<gfm::GraphPairRef, 1> refs{gfm::GraphPairRef{&gi, &gj}};
  return gfm::make_batch(refs, alphabet);
}

void forward(benchmark::State& state, gfm::AttentionMode mode) {
  gfm::FusionConfig cfg;
  cfg.attention_mode = mode;
  const gfm::GfmModel model(kAlphabet, cfg, 1);
  const auto batch = pair_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(batch));
}

void BM_ForwardTransformer(benchmark::State& state) { forward(state, gfm::AttentionMode::kTransformer); }
void BM_ForwardPerformer(benchmark::State& state) { forward(state, gfm::AttentionMode::kPerformer); }
BENCHMARK(BM_ForwardTransformer)->Arg(64)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardPerformer)->Arg(64)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(n * n), b(n * n);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  const gfm::Tensor ta({n, n}, a), tb({n, n}, b);
  for (auto _ : state) benchmark::DoNotOptimize(gfm::ops::matmul(ta, tb));
}
BENCHMARK(BM_Matmul)->Arg(48)->Arg(128)->Arg(256);

void ged_method(benchmark::State& state, gfm::ged::MethodSpec spec) {
  gfm::SyntheticConfig cfg;
  cfg.seed = 5;
  cfg.min_nodes = cfg.max_nodes = static_cast<std::size_t>(state.range(0));
  const auto pair = gfm::generate_synthetic_pair(5, cfg, 3);
  for (auto _ : state) benchmark::DoNotOptimize(gfm::ged::run_method(pair.first, pair.second, spec).distance);
}

void BM_AStar(benchmark::State& state) { ged_method(state, {gfm::ged::Method::kExactAStar, 0}); }
void BM_Beam10(benchmark::State& state) { ged_method(state, gfm::ged::MethodSpec::beam(10)); }
void BM_Bipartite(benchmark::State& state) { ged_method(state, gfm::ged::MethodSpec::bipartite()); }
void BM_Hed(benchmark::State& state) { ged_method(state, gfm::ged::MethodSpec::hed()); }
BENCHMARK(BM_AStar)->Arg(6)->Arg(8)->Arg(10);
BENCHMARK(BM_Beam10)->Arg(6)->Arg(10)->Arg(20);
BENCHMARK(BM_Bipartite)->Arg(6)->Arg(10)->Arg(20);
BENCHMARK(BM_Hed)->Arg(6)->Arg(10)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
