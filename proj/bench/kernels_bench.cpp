#include <benchmark/benchmark.h>

#include <vector>

#include "softmark/kernels.hpp"
#include "softmark/rng.hpp"

namespace k = softmark::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  softmark::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::gemm(k::Trans::no, k::Trans::yes, n, n, n, a.data(), b.data(), c.data(), false);
    else
      k::reference::gemm(k::Trans::no, k::Trans::yes, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_im2col(benchmark::State& state) {
  // a resnet18 stage-1 sized input
  const k::ConvGeom g{64, 32, 32, 3, 1, 1};
  const auto img = filled(g.channels * g.height * g.width, 3);
  std::vector<double> col(g.col_rows() * g.col_cols());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::im2col(img.data(), g, col.data());
    else
      k::reference::im2col(img.data(), g, col.data());
    benchmark::DoNotOptimize(col.data());
  }
}

template <bool Parallel>
void BM_col2im(benchmark::State& state) {
  const k::ConvGeom g{64, 32, 32, 3, 1, 1};
  const auto col = filled(g.col_rows() * g.col_cols(), 4);
  std::vector<double> img(g.channels * g.height * g.width);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::col2im(col.data(), g, img.data());
    else
      k::reference::col2im(col.data(), g, img.data());
    benchmark::DoNotOptimize(img.data());
  }
}

template <bool Parallel>
void BM_relu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = filled(n, 5);
  std::vector<double> y(n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::relu_forward(n, x.data(), y.data());
    else
      k::reference::relu_forward(n, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_im2col<false>)->Name("im2col/reference");
BENCHMARK(BM_im2col<true>)->Name("im2col/parallel");
BENCHMARK(BM_col2im<false>)->Name("col2im/reference");
BENCHMARK(BM_col2im<true>)->Name("col2im/parallel");
BENCHMARK(BM_relu<false>)->Name("relu/reference")->Arg(1 << 20);
BENCHMARK(BM_relu<true>)->Name("relu/parallel")->Arg(1 << 20);

BENCHMARK_MAIN();
