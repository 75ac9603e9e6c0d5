// Parallel kernels against their serial reference implementations.

#include <benchmark/benchmark.h>

#include <random>

#include "angiogan/kernels.hpp"
#include "angiogan/kernels_reference.hpp"
#include "angiogan/perturb.hpp"

namespace {

using angiogan::Shape;
using angiogan::Tensor;
namespace k = angiogan::kernels;

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Args: channels, spatial extent, kernel, stride.
void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 64, 3, 1})->Args({32, 64, 3, 1})->Args({32, 128, 3, 1})->Args({64, 64, 4, 2});
}

template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(3)), kk / 2};
  const Tensor x = random_tensor({1, c, s, s}, 1);
  const Tensor w = random_tensor({c, c, kk, kk}, 2);
  for (auto _ : state) {
    Tensor y = Parallel ? k::conv2d(x, w, g) : k::reference::conv2d(x, w, g);
    benchmark::DoNotOptimize(y.data());
  }
  const std::size_t out = k::conv_output_extent(s, kk, g);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * c * c * kk * kk * out * out));
}
BENCHMARK(BM_Conv2d<true>)->Name("conv2d/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2d<false>)->Name("conv2d/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_Depthwise(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({1, c, s + 2, s + 2}, 3);
  const Tensor w = random_tensor({c, 1, 3, 3}, 4);
  for (auto _ : state) {
    Tensor y = Parallel ? k::depthwise_conv2d(x, w) : k::reference::depthwise_conv2d(x, w);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Depthwise<true>)->Name("depthwise/parallel")->Args({32, 128})->Args({64, 256})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Depthwise<false>)->Name("depthwise/reference")->Args({32, 128})->Args({64, 256})->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_ConvTranspose(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const k::ConvGeometry g{2, 1};
  const Tensor x = random_tensor({1, c, s, s}, 5);
  const Tensor w = random_tensor({c, c / 2, 3, 3}, 6);
  for (auto _ : state) {
    Tensor y = Parallel ? k::conv_transpose2d(x, w, g, 1) : k::reference::conv_transpose2d(x, w, g, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvTranspose<true>)->Name("conv_transpose2d/parallel")->Args({32, 64})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTranspose<false>)->Name("conv_transpose2d/reference")->Args({32, 64})->Unit(benchmark::kMillisecond);

void BM_GaussianBlur(benchmark::State& state) {
  const Tensor x = random_tensor({1, 3, 512, 512}, 7);
  const double sigma = static_cast<double>(state.range(0));
  for (auto _ : state) {
    Tensor y = angiogan::gaussian_blur(x, sigma);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_GaussianBlur)->Name("gaussian_blur/512")->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
