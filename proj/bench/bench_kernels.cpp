// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "path_engine/kernels.hpp"
#include "path_engine/random.hpp"

namespace {

using namespace path_engine;

std::vector<real> random_vector(std::int64_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<real> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
  return v;
}

using GemmFn = void (*)(std::int64_t, std::int64_t, std::int64_t, const real*, bool, const real*, bool, real*, bool);

template <GemmFn Gemm>
void BM_gemm(benchmark::State& state) {
  const auto m = state.range(0), n = state.range(1), k = state.range(2);
  const bool trans_b = state.range(3) != 0;
  const auto a = random_vector(m * k, 1), b = random_vector(k * n, 2);
  std::vector<real> c(static_cast<std::size_t>(m * n));
  for (auto _ : state) {
    Gemm(m, n, k, a.data(), false, b.data(), trans_b, c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * m * n * k);
}

// Token-by-channel products of the desk model: attention, MLP, patch embedding.
void gemm_shapes(benchmark::internal::Benchmark* b) {
  for (auto shape : std::vector<std::vector<std::int64_t>>{
           {512, 96, 32, 1}, {512, 64, 32, 1}, {512, 32, 64, 0}, {64, 64, 8, 1}, {256, 256, 256, 0}})
    b->Args(shape);
}

kernels::ConvGeometry conv_geometry(benchmark::State& state) {
  return {.channels = state.range(0), .height = state.range(1), .width = state.range(1), .kernel_h = 3,
          .kernel_w = 3, .stride = 1, .pad = 1};
}

template <void (*Im2col)(const real*, const kernels::ConvGeometry&, real*)>
void BM_im2col(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto image = random_vector(g.channels * g.height * g.width, 3);
  std::vector<real> cols(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  for (auto _ : state) {
    Im2col(image.data(), g, cols.data());
    benchmark::DoNotOptimize(cols.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(cols.size() * sizeof(real)));
}

template <void (*Col2im)(const real*, const kernels::ConvGeometry&, real*)>
void BM_col2im(benchmark::State& state) {
  const auto g = conv_geometry(state);
  const auto cols = random_vector(g.col_rows() * g.col_cols(), 4);
  std::vector<real> image(static_cast<std::size_t>(g.channels * g.height * g.width));
  for (auto _ : state) {
    std::fill(image.begin(), image.end(), real(0));
    Col2im(cols.data(), g, image.data());
    benchmark::DoNotOptimize(image.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(cols.size() * sizeof(real)));
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  for (auto shape : std::vector<std::vector<std::int64_t>>{{32, 8}, {64, 16}, {16, 32}}) b->Args(shape);
}

BENCHMARK(BM_gemm<kernels::serial::gemm>)->Name("gemm/serial")->Apply(gemm_shapes);
BENCHMARK(BM_gemm<kernels::parallel::gemm>)->Name("gemm/parallel")->Apply(gemm_shapes);
BENCHMARK(BM_im2col<kernels::serial::im2col>)->Name("im2col/serial")->Apply(conv_shapes);
BENCHMARK(BM_im2col<kernels::parallel::im2col>)->Name("im2col/parallel")->Apply(conv_shapes);
BENCHMARK(BM_col2im<kernels::serial::col2im>)->Name("col2im/serial")->Apply(conv_shapes);
BENCHMARK(BM_col2im<kernels::parallel::col2im>)->Name("col2im/parallel")->Apply(conv_shapes);

}  // namespace

BENCHMARK_MAIN();
