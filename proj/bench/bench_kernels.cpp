// Serial reference kernels against the OpenMP implementations.

#include "fspc/backbone.hpp"
#include "fspc/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace fspc;
using namespace fspc::kernels;

namespace {

Matrix random_points(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

LinearParams random_layer(int out, int in, std::uint64_t seed) {
  LinearParams p;
  p.weight = random_points(out, in, seed);
  p.bias = random_points(1, out, seed + 1);
  return p;
}

void BM_KnnReference(benchmark::State& state) {
  const Matrix x = random_points(state.range(0), 3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(knn_reference(x, 20));
}

void BM_Knn(benchmark::State& state) {
  const Matrix x = random_points(state.range(0), 3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(knn(x, 20));
}

// An episode-sized batch: 20 clouds of range(0) points.
void BM_KnnBatched(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix x = random_points(20 * n, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(knn_batched(x, 20, 20));
}

void BM_KnnBatchedReference(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix x = random_points(20 * n, 3, 2);
  for (auto _ : state)
    for (int c = 0; c < 20; ++c) benchmark::DoNotOptimize(knn_reference(x.middleRows(c * n, n), 20));
}

void BM_EdgeConvReference(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix x = random_points(n, 64, 3);
  const IndexMatrix nb = knn(x, 20);
  const LinearParams layer = random_layer(64, 128, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(edgeconv_reference(x, nb, static_cast<int>(n), layer.weight, layer.bias, nullptr));
}

void BM_EdgeConv(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix x = random_points(n, 64, 3);
  const IndexMatrix nb = knn(x, 20);
  const LinearParams layer = random_layer(64, 128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(edgeconv_layer(x, nb, layer));
}

}  // namespace

BENCHMARK(BM_KnnReference)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Knn)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnBatchedReference)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnBatched)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EdgeConvReference)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EdgeConv)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
