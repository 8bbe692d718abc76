#pragma once

#include <cstdint>

#include "path_engine/real.hpp"

// Dense compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial` is the straightforward reference kept
// for testing (f64 accumulation, no blocking), `parallel` is the OpenMP
// version the ops call. Parallel kernels partition work over output rows or
// channels only, so each output element is produced by exactly one thread
// with a fixed accumulation order and results do not depend on thread count.

namespace path_engine::inline PATH_ENGINE_NS::kernels {

struct ConvGeometry {
  std::int64_t channels = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;

  std::int64_t out_h() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  /// Rows of the column matrix: channels * kernel_h * kernel_w.
  std::int64_t col_rows() const { return channels * kernel_h * kernel_w; }
  std::int64_t col_cols() const { return out_h() * out_w(); }
};

namespace serial {

/// C(m x n) = op(A) * op(B), or += when `accumulate`.
/// A is stored m x k (k x m when trans_a); B is k x n (n x k when trans_b).
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, bool trans_a, const real* b,
          bool trans_b, real* c, bool accumulate);
void im2col(const real* image, const ConvGeometry& g, real* cols);
/// Scatter-adds columns back into `image` (not cleared first).
void col2im(const real* cols, const ConvGeometry& g, real* image);

}  // namespace serial

namespace parallel {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, bool trans_a, const real* b,
          bool trans_b, real* c, bool accumulate);
void im2col(const real* image, const ConvGeometry& g, real* cols);
void col2im(const real* cols, const ConvGeometry& g, real* image);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels may use (1 disables threading).
void set_num_threads(int threads);
int num_threads();

}  // namespace path_engine::kernels
