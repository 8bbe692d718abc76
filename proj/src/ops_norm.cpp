#include <cmath>
#include <limits>

#include "ops_internal.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops {

using detail::input_grad;
using detail::input_value;
using detail::require;
using detail::split_at;
using detail::wants_grad;

namespace {

Var softmax_impl(const Var& x, int axis, bool log_space) {
  const int ax = normalize_axis(axis, x.value().ndim());
  const auto s = split_at(x.shape(), ax);
  require(s.extent > 0, "softmax over empty axis");
  Tensor out(x.shape());
  const real* xv = x.value().ptr();
  real* ov = out.ptr();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.extent * s.inner + i;
      real mx = -std::numeric_limits<real>::infinity();
      for (std::int64_t k = 0; k < s.extent; ++k) mx = std::max(mx, xv[base + k * s.inner]);
      double den = 0.0;
      for (std::int64_t k = 0; k < s.extent; ++k) {
        const real e = std::exp(xv[base + k * s.inner] - mx);
        ov[base + k * s.inner] = e;
        den += e;
      }
      if (log_space) {
        const double log_den = std::log(den);
        for (std::int64_t k = 0; k < s.extent; ++k)
          ov[base + k * s.inner] = static_cast<real>(static_cast<double>(xv[base + k * s.inner] - mx) - log_den);
      } else {
        const double inv = 1.0 / den;
        for (std::int64_t k = 0; k < s.extent; ++k)
          ov[base + k * s.inner] = static_cast<real>(ov[base + k * s.inner] * inv);
      }
    }
  return make_result(std::move(out), {x}, [s, log_space](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dx = input_grad(self, 0);
    const real* y = self.value.ptr();
    for (std::int64_t o = 0; o < s.outer; ++o)
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const std::int64_t base = o * s.extent * s.inner + i;
        double acc = 0.0;
        for (std::int64_t k = 0; k < s.extent; ++k) {
          const auto idx = static_cast<std::size_t>(base + k * s.inner);
          acc += log_space ? static_cast<double>(g[idx]) : static_cast<double>(g[idx]) * y[idx];
        }
        for (std::int64_t k = 0; k < s.extent; ++k) {
          const auto idx = static_cast<std::size_t>(base + k * s.inner);
          if (log_space)
            dx[idx] += static_cast<real>(g[idx] - std::exp(static_cast<double>(y[idx])) * acc);
          else
            dx[idx] += static_cast<real>(y[idx] * (g[idx] - acc));
        }
      }
  });
}

}  // namespace

Var softmax(const Var& x, int axis) { return softmax_impl(x, axis, false); }
Var log_softmax(const Var& x, int axis) { return softmax_impl(x, axis, true); }

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps) {
  require(x.value().ndim() >= 1, "layer_norm on scalar");
  const std::int64_t d = x.shape().back();
  require(gamma.numel() == d && beta.numel() == d, "layer_norm affine extent mismatch");
  const std::int64_t rows = d > 0 ? x.numel() / d : 0;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<real>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<real>>(static_cast<std::size_t>(rows));
  const real* xv = x.value().ptr();
  const real* gv = gamma.value().ptr();
  const real* bv = beta.value().ptr();
  for (std::int64_t r = 0; r < rows; ++r) {
    const real* row = xv + r * d;
    double mu = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = static_cast<real>(is);
    for (std::int64_t j = 0; j < d; ++j) {
      const real h = static_cast<real>((row[j] - mu) * is);
      (*xhat)[static_cast<std::size_t>(r * d + j)] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [=](Node& self) {
    const auto& g = self.grad();
    const real* gv = input_value(self, 1).ptr();
    if (wants_grad(self, 0)) {
      auto& dx = input_grad(self, 0);
      for (std::int64_t r = 0; r < rows; ++r) {
        double m1 = 0.0, m2 = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
          const auto i = static_cast<std::size_t>(r * d + j);
          const double dh = static_cast<double>(g[i]) * gv[j];
          m1 += dh;
          m2 += dh * (*xhat)[i];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        const double is = (*inv_std)[static_cast<std::size_t>(r)];
        for (std::int64_t j = 0; j < d; ++j) {
          const auto i = static_cast<std::size_t>(r * d + j);
          const double dh = static_cast<double>(g[i]) * gv[j];
          dx[i] += static_cast<real>(is * (dh - m1 - (*xhat)[i] * m2));
        }
      }
    }
    for (std::size_t which : {std::size_t{1}, std::size_t{2}}) {
      if (!wants_grad(self, which)) continue;
      auto& dp = input_grad(self, which);
      for (std::int64_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::int64_t r = 0; r < rows; ++r) {
          const auto i = static_cast<std::size_t>(r * d + j);
          acc += which == 1 ? static_cast<double>(g[i]) * (*xhat)[i] : static_cast<double>(g[i]);
        }
        dp[static_cast<std::size_t>(j)] += static_cast<real>(acc);
      }
    }
  });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, real eps) {
  require(x.value().ndim() == 4, "layer_norm_channels expects NCHW");
  Var nhwc = permute(x, {0, 2, 3, 1});
  return permute(layer_norm(nhwc, gamma, beta, eps), {0, 3, 1, 2});
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, BatchNormMode mode) {
  const auto& xs = x.shape();
  require(xs.size() >= 2, "batch_norm expects [N, C, ...]");
  const std::int64_t n = xs[0], c = xs[1];
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < xs.size(); ++i) inner *= xs[i];
  require(gamma.numel() == c && beta.numel() == c, "batch_norm affine extent mismatch");
  require(state.running_mean.numel() == c && state.running_var.numel() == c, "batch_norm state extent mismatch");
  const std::int64_t count = n * inner;
  const bool train = mode == BatchNormMode::Train;
  if (train && n < 2)
    throw DegenerateBatchError("batch_norm in train mode needs a batch of at least 2, got " + std::to_string(n));

  std::vector<double> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  const real* xv = x.value().ptr();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const auto cu = static_cast<std::size_t>(ch);
    if (train) {
      double mu = 0.0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t q = 0; q < inner; ++q) mu += xv[(b * c + ch) * inner + q];
      mu /= static_cast<double>(count);
      double var = 0.0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t q = 0; q < inner; ++q) {
          const double dv = xv[(b * c + ch) * inner + q] - mu;
          var += dv * dv;
        }
      const double biased = var / static_cast<double>(count);
      const double unbiased = var / static_cast<double>(count - 1);
      mean[cu] = mu;
      inv_std[cu] = 1.0 / std::sqrt(biased + state.eps);
      const double m = state.momentum;
      state.running_mean[ch] = static_cast<real>((1.0 - m) * state.running_mean[ch] + m * mu);
      state.running_var[ch] = static_cast<real>((1.0 - m) * state.running_var[ch] + m * unbiased);
    } else {
      mean[cu] = state.running_mean[ch];
      inv_std[cu] = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + state.eps);
    }
  }

  Tensor out(xs);
  auto xhat = std::make_shared<std::vector<real>>(static_cast<std::size_t>(x.numel()));
  const real* gv = gamma.value().ptr();
  const real* bv = beta.value().ptr();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t q = 0; q < inner; ++q) {
        const std::int64_t i = (b * c + ch) * inner + q;
        const auto cu = static_cast<std::size_t>(ch);
        const real h = static_cast<real>((xv[i] - mean[cu]) * inv_std[cu]);
        (*xhat)[static_cast<std::size_t>(i)] = h;
        out[i] = h * gv[ch] + bv[ch];
      }

  return make_result(std::move(out), {x, gamma, beta}, [=](Node& self) {
    const auto& g = self.grad();
    const real* gv = input_value(self, 1).ptr();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double sg = 0.0, sgh = 0.0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t q = 0; q < inner; ++q) {
          const auto i = static_cast<std::size_t>((b * c + ch) * inner + q);
          sg += g[i];
          sgh += static_cast<double>(g[i]) * (*xhat)[i];
        }
      if (wants_grad(self, 1)) input_grad(self, 1)[static_cast<std::size_t>(ch)] += static_cast<real>(sgh);
      if (wants_grad(self, 2)) input_grad(self, 2)[static_cast<std::size_t>(ch)] += static_cast<real>(sg);
      if (!wants_grad(self, 0)) continue;
      auto& dx = input_grad(self, 0);
      const double scale_c = gv[ch] * inv_std[static_cast<std::size_t>(ch)];
      const double m1 = sg / static_cast<double>(count), m2 = sgh / static_cast<double>(count);
      for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t q = 0; q < inner; ++q) {
          const auto i = static_cast<std::size_t>((b * c + ch) * inner + q);
          if (train)
            dx[i] += static_cast<real>(scale_c * (g[i] - m1 - (*xhat)[i] * m2));
          else
            dx[i] += static_cast<real>(scale_c * g[i]);
        }
    }
  });
}

}  // namespace path_engine::ops
