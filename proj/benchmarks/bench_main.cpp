#include <benchmark/benchmark.h>

#include <random>

#include "eagle/attention.hpp"
#include "eagle/metrics.hpp"
#include "eagle/store.hpp"
#include "eagle/synthetic.hpp"
#include "eagle/tessellation.hpp"

namespace {

std::vector<float> random_vector(std::mt19937& rng, std::size_t dim) {
  std::normal_distribution<float> nd;
  std::vector<float> v(dim);
  for (auto& x : v) x = nd(rng);
  return v;
}

void BM_StoreSearch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t dim = 1280;
  std::mt19937 rng(1);
  eagle::EmbeddingStore store;
  for (std::size_t i = 0; i < n; ++i) store.add({"r" + std::to_string(i), "c", random_vector(rng, dim), {}});
  const auto q = random_vector(rng, dim);
  eagle::SearchOptions opts;
  opts.top_k = 10;
  for (auto _ : state) benchmark::DoNotOptimize(store.search(q, opts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_StoreSearch)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_AttentionScores(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t dim = 768;
  std::mt19937 rng(2);
  eagle::EmbeddingMatrix m("s", "scout", dim);
  for (std::size_t i = 0; i < rows; ++i) m.append(random_vector(rng, dim), {});
  const auto head = eagle::random_head(0, 256, dim);
  for (auto _ : state) benchmark::DoNotOptimize(eagle::attention_scores(head, m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_AttentionScores)->Arg(1310)->Arg(17771)->Unit(benchmark::kMillisecond);

void BM_Canny(benchmark::State& state) {
  const auto slide = eagle::make_synthetic_slide("b", 1, 3);
  const auto tile = slide.slide.pixels.crop(0, 0, 224, 224);
  for (auto _ : state) benchmark::DoNotOptimize(eagle::edge_fraction(tile, 40, 100));
}
BENCHMARK(BM_Canny)->Unit(benchmark::kMicrosecond);

void BM_DeLong(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> a(n), b(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    a[i] = nd(rng) + y[i];
    b[i] = nd(rng) + 0.5 * y[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(eagle::delong_test(a, b, y));
}
BENCHMARK(BM_DeLong)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
