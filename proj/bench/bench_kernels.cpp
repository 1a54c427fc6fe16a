// Serial reference vs OpenMP kernels at the sizes the model actually runs.

#include <benchmark/benchmark.h>

#include <vector>

#include "zsad/kernels.hpp"
#include "zsad/rng.hpp"

namespace {

using namespace zsad;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{false, false, n, n, n};
  const auto a = random_buffer(n * n, 1);
  const auto b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm(s, a.data(), b.data(), c.data(), false);
    else kernels::serial::gemm(s, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

// First block-encoder stage: 32x32 frames, 5 stacked frames, 3x3 stride 2.
template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  const kernels::ConvGeometry g{32, 32, 15, 3, 2, 1};
  const auto x = random_buffer(g.height * g.width * g.channels, 3);
  std::vector<double> col(g.out_height() * g.out_width() * g.patch_size());
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::im2col(g, x.data(), col.data());
    else kernels::serial::im2col(g, x.data(), col.data());
    benchmark::DoNotOptimize(col.data());
  }
}

template <bool Parallel>
void BM_Col2im(benchmark::State& state) {
  const kernels::ConvGeometry g{32, 32, 15, 3, 2, 1};
  const auto dcol = random_buffer(g.out_height() * g.out_width() * g.patch_size(), 4);
  std::vector<double> dx(g.height * g.width * g.channels);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::col2im(g, dcol.data(), dx.data());
    else kernels::serial::col2im(g, dcol.data(), dx.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

// Generated 64x64 frames down to the 32x32 model input.
template <bool Parallel>
void BM_Resize(benchmark::State& state) {
  const auto src = random_buffer(64 * 64 * 3, 5);
  std::vector<double> dst(32 * 32 * 3);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::resize_bilinear(src.data(), 64, 64, 3, dst.data(), 32, 32);
    else kernels::serial::resize_bilinear(src.data(), 64, 64, 3, dst.data(), 32, 32);
    benchmark::DoNotOptimize(dst.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial");
BENCHMARK(BM_Im2col<true>)->Name("im2col/parallel");
BENCHMARK(BM_Col2im<false>)->Name("col2im/serial");
BENCHMARK(BM_Col2im<true>)->Name("col2im/parallel");
BENCHMARK(BM_Resize<false>)->Name("resize/serial");
BENCHMARK(BM_Resize<true>)->Name("resize/parallel");

}  // namespace

BENCHMARK_MAIN();
