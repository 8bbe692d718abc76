#include <cmath>

#include "ops_internal.hpp"
#include "path_engine/kernels.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops {

using detail::input_grad;
using detail::input_value;
using detail::require;
using detail::wants_grad;
namespace k = kernels::parallel;

Var matmul(const Var& a, const Var& b, bool transpose_b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() >= 2 && bs.size() >= 2, "matmul needs rank >= 2 operands, got " + shape_str(as) + " and " +
                                                 shape_str(bs));
  const std::int64_t m = as[as.size() - 2], kk = as.back();
  const std::int64_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::int64_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  require(kk == bk, "matmul inner extent mismatch: " + shape_str(as) + " x " + shape_str(bs) +
                        (transpose_b ? "^T" : ""));
  const bool shared_b = bs.size() == 2;
  std::int64_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  if (!shared_b) {
    require(bs.size() == as.size() && std::equal(as.begin(), as.end() - 2, bs.begin()),
            "matmul batch extents differ: " + shape_str(as) + " vs " + shape_str(bs));
  }
  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  if (shared_b) {
    k::gemm(batch * m, n, kk, a.value().ptr(), false, b.value().ptr(), transpose_b, out.ptr(), false);
  } else {
    for (std::int64_t i = 0; i < batch; ++i)
      k::gemm(m, n, kk, a.value().ptr() + i * m * kk, false, b.value().ptr() + i * kk * n, transpose_b,
              out.ptr() + i * m * n, false);
  }
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    const real* g = self.grad().data();
    const real* av = input_value(self, 0).ptr();
    const real* bv = input_value(self, 1).ptr();
    const std::int64_t rows = shared_b ? batch * m : m;
    const std::int64_t reps = shared_b ? 1 : batch;
    if (wants_grad(self, 0)) {
      real* da = input_grad(self, 0).data();
      // dA = dC * op(B)^T
      for (std::int64_t i = 0; i < reps; ++i)
        k::gemm(rows, kk, n, g + i * rows * n, false, bv + (shared_b ? 0 : i * kk * n), !transpose_b,
                da + i * rows * kk, true);
    }
    if (wants_grad(self, 1)) {
      real* db = input_grad(self, 1).data();
      for (std::int64_t i = 0; i < reps; ++i) {
        const real* ai = av + i * rows * kk;
        const real* gi = g + i * rows * n;
        real* dbi = db + (shared_b ? 0 : i * kk * n);
        if (transpose_b)
          k::gemm(n, kk, rows, gi, true, ai, false, dbi, true);  // dB[N,K] += dC^T A
        else
          k::gemm(kk, n, rows, ai, true, gi, false, dbi, true);  // dB[K,N] += A^T dC
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  Var y = matmul(x, w);
  return bias.defined() ? add(y, bias) : y;
}

namespace {

kernels::ConvGeometry geometry_for(const Shape& x, const Shape& w, std::int64_t stride, std::int64_t pad) {
  kernels::ConvGeometry g;
  g.channels = x[1];
  g.height = x[2];
  g.width = x[3];
  g.kernel_h = w[2];
  g.kernel_w = w[3];
  g.stride = stride;
  g.pad = pad;
  return g;
}

void add_channel_bias(Tensor& out, const Tensor& bias) {
  const std::int64_t b = out.dim(0), c = out.dim(1), hw = out.dim(2) * out.dim(3);
  real* o = out.ptr();
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const real v = bias[j];
      real* p = o + (i * c + j) * hw;
      for (std::int64_t q = 0; q < hw; ++q) p[q] += v;
    }
}

void accumulate_channel_bias_grad(const std::vector<real>& g, const Shape& out_shape, std::vector<real>& db) {
  const std::int64_t b = out_shape[0], c = out_shape[1], hw = out_shape[2] * out_shape[3];
  for (std::int64_t j = 0; j < c; ++j) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < b; ++i) {
      const real* p = g.data() + (i * c + j) * hw;
      for (std::int64_t q = 0; q < hw; ++q) acc += p[q];
    }
    db[static_cast<std::size_t>(j)] += static_cast<real>(acc);
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& bias, std::int64_t stride, std::int64_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4, "conv2d expects NCHW input and [Co,Ci,kh,kw] weight");
  require(xs[1] == ws[1], "conv2d channel mismatch: input " + shape_str(xs) + ", weight " + shape_str(ws));
  require(stride >= 1 && pad >= 0, "conv2d stride must be >= 1 and pad >= 0");
  require(ws[2] <= xs[2] + 2 * pad && ws[3] <= xs[3] + 2 * pad,
          "conv2d kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
  if (bias.defined()) require(bias.numel() == ws[0], "conv2d bias extent mismatch");
  const auto g = geometry_for(xs, ws, stride, pad);
  const std::int64_t batch = xs[0], co = ws[0], rows = g.col_rows(), cols = g.col_cols();
  Tensor out({batch, co, g.out_h(), g.out_w()});
  auto saved_cols = std::make_shared<std::vector<real>>(static_cast<std::size_t>(batch * rows * cols));
  const std::int64_t in_plane = xs[1] * xs[2] * xs[3];
  for (std::int64_t b = 0; b < batch; ++b) {
    real* cb = saved_cols->data() + b * rows * cols;
    k::im2col(x.value().ptr() + b * in_plane, g, cb);
    k::gemm(co, cols, rows, w.value().ptr(), false, cb, false, out.ptr() + b * co * cols, false);
  }
  if (bias.defined()) add_channel_bias(out, bias.value());
  return make_result(std::move(out), {x, w, bias}, [=](Node& self) {
    const auto& gr = self.grad();
    const real* wv = input_value(self, 1).ptr();
    std::vector<real> dcols(static_cast<std::size_t>(rows * cols));
    for (std::int64_t b = 0; b < batch; ++b) {
      const real* gb = gr.data() + b * co * cols;
      const real* cb = saved_cols->data() + b * rows * cols;
      if (wants_grad(self, 1)) k::gemm(co, rows, cols, gb, false, cb, true, input_grad(self, 1).data(), true);
      if (wants_grad(self, 0)) {
        k::gemm(rows, cols, co, wv, true, gb, false, dcols.data(), false);
        k::col2im(dcols.data(), g, input_grad(self, 0).data() + b * in_plane);
      }
    }
    if (self.inputs.size() > 2 && wants_grad(self, 2))
      accumulate_channel_bias_grad(gr, self.value.shape(), input_grad(self, 2));
  });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, std::int64_t stride, std::int64_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4, "conv_transpose2d expects NCHW input and [Ci,Co,kh,kw] weight");
  require(xs[1] == ws[0], "conv_transpose2d channel mismatch: input " + shape_str(xs) + ", weight " +
                              shape_str(ws));
  require(stride >= 1 && pad >= 0, "conv_transpose2d stride must be >= 1 and pad >= 0");
  const std::int64_t batch = xs[0], ci = xs[1], co = ws[1];
  const std::int64_t oh = (xs[2] - 1) * stride - 2 * pad + ws[2];
  const std::int64_t ow = (xs[3] - 1) * stride - 2 * pad + ws[3];
  require(oh > 0 && ow > 0, "conv_transpose2d produces an empty output");
  if (bias.defined()) require(bias.numel() == co, "conv_transpose2d bias extent mismatch");
  // Geometry of the forward convolution this op is the adjoint of.
  kernels::ConvGeometry g;
  g.channels = co;
  g.height = oh;
  g.width = ow;
  g.kernel_h = ws[2];
  g.kernel_w = ws[3];
  g.stride = stride;
  g.pad = pad;
  require(g.out_h() == xs[2] && g.out_w() == xs[3], "conv_transpose2d geometry is not invertible");
  const std::int64_t rows = g.col_rows(), cols = g.col_cols(), in_plane = ci * cols, out_plane = co * oh * ow;
  Tensor out({batch, co, oh, ow});
  std::vector<real> colbuf(static_cast<std::size_t>(rows * cols));
  for (std::int64_t b = 0; b < batch; ++b) {
    k::gemm(rows, cols, ci, w.value().ptr(), true, x.value().ptr() + b * in_plane, false, colbuf.data(), false);
    k::col2im(colbuf.data(), g, out.ptr() + b * out_plane);
  }
  if (bias.defined()) add_channel_bias(out, bias.value());
  return make_result(std::move(out), {x, w, bias}, [=](Node& self) {
    const auto& gr = self.grad();
    const real* wv = input_value(self, 1).ptr();
    const real* xv = input_value(self, 0).ptr();
    std::vector<real> dcols(static_cast<std::size_t>(rows * cols));
    for (std::int64_t b = 0; b < batch; ++b) {
      k::im2col(gr.data() + b * out_plane, g, dcols.data());
      if (wants_grad(self, 0))
        k::gemm(ci, cols, rows, wv, false, dcols.data(), false, input_grad(self, 0).data() + b * in_plane, true);
      if (wants_grad(self, 1))
        k::gemm(ci, rows, cols, xv + b * in_plane, false, dcols.data(), true, input_grad(self, 1).data(), true);
    }
    if (self.inputs.size() > 2 && wants_grad(self, 2))
      accumulate_channel_bias_grad(gr, self.value.shape(), input_grad(self, 2));
  });
}

namespace {

struct AxisInterp {
  std::vector<std::int64_t> lo, hi;
  std::vector<real> frac;
};

AxisInterp interp_axis(std::int64_t in, std::int64_t out, bool align_corners) {
  AxisInterp a;
  a.lo.resize(static_cast<std::size_t>(out));
  a.hi.resize(static_cast<std::size_t>(out));
  a.frac.resize(static_cast<std::size_t>(out));
  for (std::int64_t d = 0; d < out; ++d) {
    double src;
    if (align_corners)
      src = out > 1 ? static_cast<double>(d) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    else
      src = std::max(0.0, (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5);
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const auto hi = std::min(lo + 1, in - 1);
    a.lo[static_cast<std::size_t>(d)] = lo;
    a.hi[static_cast<std::size_t>(d)] = hi;
    a.frac[static_cast<std::size_t>(d)] = static_cast<real>(src - static_cast<double>(lo));
  }
  return a;
}

}  // namespace

Var bilinear_resize(const Var& x, std::int64_t out_h, std::int64_t out_w, bool align_corners) {
  const auto& xs = x.shape();
  require(xs.size() == 4, "bilinear_resize expects an NCHW tensor");
  require(out_h >= 1 && out_w >= 1, "bilinear_resize target extent must be >= 1");
  const std::int64_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  const auto ay = interp_axis(h, out_h, align_corners);
  const auto ax = interp_axis(w, out_w, align_corners);
  Tensor out({xs[0], xs[1], out_h, out_w});
  const real* xv = x.value().ptr();
  real* ov = out.ptr();
  for (std::int64_t p = 0; p < planes; ++p) {
    const real* src = xv + p * h * w;
    real* dst = ov + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto y0 = ay.lo[static_cast<std::size_t>(y)], y1 = ay.hi[static_cast<std::size_t>(y)];
      const real fy = ay.frac[static_cast<std::size_t>(y)];
      for (std::int64_t xo = 0; xo < out_w; ++xo) {
        const auto x0 = ax.lo[static_cast<std::size_t>(xo)], x1 = ax.hi[static_cast<std::size_t>(xo)];
        const real fx = ax.frac[static_cast<std::size_t>(xo)];
        const real top = src[y0 * w + x0] + fx * (src[y0 * w + x1] - src[y0 * w + x0]);
        const real bot = src[y1 * w + x0] + fx * (src[y1 * w + x1] - src[y1 * w + x0]);
        dst[y * out_w + xo] = top + fy * (bot - top);
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dx = input_grad(self, 0);
    for (std::int64_t p = 0; p < planes; ++p) {
      const real* gp = g.data() + p * out_h * out_w;
      real* dp = dx.data() + p * h * w;
      for (std::int64_t y = 0; y < out_h; ++y) {
        const auto y0 = ay.lo[static_cast<std::size_t>(y)], y1 = ay.hi[static_cast<std::size_t>(y)];
        const real fy = ay.frac[static_cast<std::size_t>(y)];
        for (std::int64_t xo = 0; xo < out_w; ++xo) {
          const auto x0 = ax.lo[static_cast<std::size_t>(xo)], x1 = ax.hi[static_cast<std::size_t>(xo)];
          const real fx = ax.frac[static_cast<std::size_t>(xo)];
          const real gv = gp[y * out_w + xo];
          dp[y0 * w + x0] += gv * (1 - fy) * (1 - fx);
          dp[y0 * w + x1] += gv * (1 - fy) * fx;
          dp[y1 * w + x0] += gv * fy * (1 - fx);
          dp[y1 * w + x1] += gv * fy * fx;
        }
      }
    }
  });
}

}  // namespace path_engine::ops
