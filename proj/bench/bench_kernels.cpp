// Reference vs parallel kernels at the desk and full-scale convolution shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "biofuse/kernels.hpp"

namespace k = biofuse::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(gen);
  return v;
}

k::ConvGeometry conv_shape(const benchmark::State& state) {
  k::ConvGeometry g;
  g.in_channels = static_cast<std::size_t>(state.range(0));
  g.out_channels = static_cast<std::size_t>(state.range(1));
  g.height = g.width = static_cast<std::size_t>(state.range(2));
  g.kernel_h = g.kernel_w = 3;
  g.padding = 1;
  return g;
}

template <auto Forward>
void conv_forward(benchmark::State& state) {
  const k::ConvGeometry g = conv_shape(state);
  const auto input = random_buffer(g.in_channels * g.height * g.width, 1);
  const auto kernels = random_buffer(g.out_channels * g.patch_size(), 2);
  const auto bias = random_buffer(g.out_channels, 3);
  std::vector<double> out(g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    Forward(g, input.data(), kernels.data(), bias.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["flops"] = benchmark::Counter(
      2.0 * static_cast<double>(out.size() * g.patch_size()), benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Backward>
void conv_backward(benchmark::State& state) {
  const k::ConvGeometry g = conv_shape(state);
  const auto input = random_buffer(g.in_channels * g.height * g.width, 1);
  const auto kernels = random_buffer(g.out_channels * g.patch_size(), 2);
  const auto grad_out = random_buffer(g.out_channels * g.out_height() * g.out_width(), 3);
  std::vector<double> gi(input.size()), gk(kernels.size()), gb(g.out_channels);
  for (auto _ : state) {
    Backward(g, input.data(), kernels.data(), grad_out.data(), gi.data(), gk.data(), gb.data());
    benchmark::DoNotOptimize(gi.data());
  }
}

template <auto Gemm>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1);
  const auto b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["flops"] =
      benchmark::Counter(2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({3, 64, 32})->Args({64, 128, 16})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(conv_forward<k::reference::conv2d_forward>)->Name("conv2d_forward/reference")->Apply(conv_args);
BENCHMARK(conv_forward<k::parallel::conv2d_forward>)->Name("conv2d_forward/parallel")->Apply(conv_args);
BENCHMARK(conv_backward<k::reference::conv2d_backward>)->Name("conv2d_backward/reference")->Apply(conv_args);
BENCHMARK(conv_backward<k::parallel::conv2d_backward>)->Name("conv2d_backward/parallel")->Apply(conv_args);
BENCHMARK(gemm<k::reference::gemm_nn>)->Name("gemm_nn/reference")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(gemm<k::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
