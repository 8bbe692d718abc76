#include <omp.h>

#include <algorithm>
#include <vector>

#include "path_engine/kernels.hpp"

namespace path_engine::inline PATH_ENGINE_NS::kernels {

namespace {
int g_threads = 1;

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::int64_t kParallelWork = 1 << 16;

constexpr std::int64_t kGemmRows = 4;

// C[i0:i0+4, j0:j0+Cols] over the full inner extent, accumulated in registers
// in the same order as the row loop.
template <std::int64_t Cols>
void gemm_tile(std::int64_t i0, std::int64_t j0, std::int64_t n, std::int64_t k, const real* a, const real* b,
               real* c, bool accumulate) {
  real acc[kGemmRows][Cols];
  for (std::int64_t r = 0; r < kGemmRows; ++r)
    for (std::int64_t j = 0; j < Cols; ++j) acc[r][j] = accumulate ? c[(i0 + r) * n + j0 + j] : real(0);
  for (std::int64_t p = 0; p < k; ++p) {
    const real* __restrict brow = b + p * n + j0;
    for (std::int64_t r = 0; r < kGemmRows; ++r) {
      const real av = a[(i0 + r) * k + p];
#pragma omp simd
      for (std::int64_t j = 0; j < Cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (std::int64_t r = 0; r < kGemmRows; ++r)
    for (std::int64_t j = 0; j < Cols; ++j) c[(i0 + r) * n + j0 + j] = acc[r][j];
}

void transpose_into(const real* src, std::int64_t rows, std::int64_t cols, std::vector<real>& dst) {
  dst.resize(static_cast<std::size_t>(rows * cols));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c * rows + r)] = src[r * cols + c];
}

}  // namespace

void set_num_threads(int threads) { g_threads = std::max(1, threads); }
int num_threads() { return g_threads; }

namespace parallel {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, bool trans_a, const real* b,
          bool trans_b, real* c, bool accumulate) {
  // Transposed operands are materialized so the hot loop is always i-k-j
  // with a unit-stride inner loop over n.
  std::vector<real> a_buf, b_buf;
  if (trans_a) {
    transpose_into(a, k, m, a_buf);
    a = a_buf.data();
  }
  if (trans_b) {
    transpose_into(b, n, k, b_buf);
    b = b_buf.data();
  }
  const bool threaded = g_threads > 1 && m > kGemmRows && m * n * k >= kParallelWork;
  const std::int64_t row_blocks = (m + kGemmRows - 1) / kGemmRows;
#pragma omp parallel for schedule(static) num_threads(g_threads) if (threaded)
  for (std::int64_t blk = 0; blk < row_blocks; ++blk) {
    const std::int64_t i0 = blk * kGemmRows;
    const std::int64_t rows = std::min(kGemmRows, m - i0);
    std::int64_t j0 = 0;
    if (rows == kGemmRows) {
      for (; j0 + 16 <= n; j0 += 16) gemm_tile<16>(i0, j0, n, k, a, b, c, accumulate);
      for (; j0 + 8 <= n; j0 += 8) gemm_tile<8>(i0, j0, n, k, a, b, c, accumulate);
    }
    if (j0 == n) continue;
    for (std::int64_t r = 0; r < rows; ++r) {
      real* __restrict crow = c + (i0 + r) * n;
      if (!accumulate) std::fill(crow + j0, crow + n, real(0));
      const real* arow = a + (i0 + r) * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const real av = arow[p];
        const real* __restrict brow = b + p * n;
#pragma omp simd
        for (std::int64_t j = j0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

void im2col(const real* image, const ConvGeometry& g, real* cols) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const bool threaded = g_threads > 1 && g.channels > 1;
#pragma omp parallel for schedule(static) num_threads(g_threads) if (threaded)
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const real* plane = image + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        real* out = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.pad + ky;
          real* orow = out + y * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(orow, orow + ow, 0.0f);
            continue;
          }
          const real* irow = plane + iy * g.width;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride - g.pad + kx;
            orow[x] = (ix >= 0 && ix < g.width) ? irow[ix] : 0.0f;
          }
        }
      }
  }
}

void col2im(const real* cols, const ConvGeometry& g, real* image) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const bool threaded = g_threads > 1 && g.channels > 1;
#pragma omp parallel for schedule(static) num_threads(g_threads) if (threaded)
  for (std::int64_t c = 0; c < g.channels; ++c) {
    real* plane = image + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const real* in = cols + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          real* irow = plane + iy * g.width;
          const real* crow = in + y * ow;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) irow[ix] += crow[x];
          }
        }
      }
  }
}

}  // namespace parallel
}  // namespace path_engine::kernels
