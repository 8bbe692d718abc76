#include "path_engine/kernels.hpp"

namespace path_engine::inline PATH_ENGINE_NS::kernels::serial {

void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, bool trans_a, const real* b,
          bool trans_b, real* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) {
        const real av = trans_a ? a[p * m + i] : a[i * k + p];
        const real bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += static_cast<double>(av) * static_cast<double>(bv);
      }
      real& out = c[i * n + j];
      out = accumulate ? static_cast<real>(out + acc) : static_cast<real>(acc);
    }
  }
}

void im2col(const real* image, const ConvGeometry& g, real* cols) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::int64_t row = (c * g.kernel_h + ky) * g.kernel_w + kx;
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t iy = y * g.stride - g.pad + ky;
            const std::int64_t ix = x * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.height && ix >= 0 && ix < g.width;
            cols[row * oh * ow + y * ow + x] = inside ? image[(c * g.height + iy) * g.width + ix] : 0.0f;
          }
      }
}

void col2im(const real* cols, const ConvGeometry& g, real* image) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const std::int64_t row = (c * g.kernel_h + ky) * g.kernel_w + kx;
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t iy = y * g.stride - g.pad + ky;
            const std::int64_t ix = x * g.stride - g.pad + kx;
            if (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
              image[(c * g.height + iy) * g.width + ix] += cols[row * oh * ow + y * ow + x];
          }
      }
}

}  // namespace path_engine::kernels::serial
