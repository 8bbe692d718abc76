#include <algorithm>
#include <cmath>
#include <numbers>

#include "ops_internal.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops {

using detail::input_grad;
using detail::input_value;
using detail::wants_grad;

namespace {

enum class BroadcastKind { Same, ScalarA, ScalarB, TrailingA, TrailingB, General };

struct BroadcastPlan {
  Shape out;
  BroadcastKind kind = BroadcastKind::General;
  std::int64_t suffix = 1;  // element count of the broadcast operand for Trailing*
  std::vector<std::int64_t> stride_a, stride_b;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    p.out[i] = std::max(pa[i], pb[i]);
    if (pa[i] == 0 || pb[i] == 0) p.out[i] = 0;
  }
  const std::int64_t na = numel(a), nb = numel(b), no = numel(p.out);
  if (a == b) {
    p.kind = BroadcastKind::Same;
  } else if (nb == 1 && na == no) {
    p.kind = BroadcastKind::ScalarB;
  } else if (na == 1 && nb == no) {
    p.kind = BroadcastKind::ScalarA;
  } else if (na == no && is_suffix(b, p.out) && nb > 0) {
    p.kind = BroadcastKind::TrailingB;
    p.suffix = nb;
  } else if (nb == no && is_suffix(a, p.out) && na > 0) {
    p.kind = BroadcastKind::TrailingA;
    p.suffix = na;
  } else {
    p.kind = BroadcastKind::General;
    p.stride_a.assign(rank, 0);
    p.stride_b.assign(rank, 0);
    std::int64_t sa = 1, sb = 1;
    for (std::size_t i = rank; i-- > 0;) {
      p.stride_a[i] = pa[i] == 1 ? 0 : sa;
      p.stride_b[i] = pb[i] == 1 ? 0 : sb;
      sa *= pa[i];
      sb *= pb[i];
    }
  }
  return p;
}

template <class F>
void broadcast_loop(const BroadcastPlan& p, F&& f) {
  const std::int64_t n = numel(p.out);
  switch (p.kind) {
    case BroadcastKind::Same:
      for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
      return;
    case BroadcastKind::ScalarB:
      for (std::int64_t i = 0; i < n; ++i) f(i, i, 0);
      return;
    case BroadcastKind::ScalarA:
      for (std::int64_t i = 0; i < n; ++i) f(i, 0, i);
      return;
    case BroadcastKind::TrailingB:
      for (std::int64_t o = 0; o < n; o += p.suffix)
        for (std::int64_t j = 0; j < p.suffix; ++j) f(o + j, o + j, j);
      return;
    case BroadcastKind::TrailingA:
      for (std::int64_t o = 0; o < n; o += p.suffix)
        for (std::int64_t j = 0; j < p.suffix; ++j) f(o + j, j, o + j);
      return;
    case BroadcastKind::General: {
      const std::size_t rank = p.out.size();
      std::vector<std::int64_t> idx(rank, 0);
      std::int64_t ia = 0, ib = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
          ++idx[d];
          ia += p.stride_a[d];
          ib += p.stride_b[d];
          if (idx[d] < p.out[d]) break;
          ia -= p.stride_a[d] * idx[d];
          ib -= p.stride_b[d] * idx[d];
          idx[d] = 0;
        }
      }
      return;
    }
  }
}

// Forward f(a, b); partials da(a, b, y) and db(a, b, y) multiply the upstream gradient.
template <class Fwd, class DA, class DB>
Var binary(const Var& a, const Var& b, Fwd fwd, DA da, DB db) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  const real* av = a.value().ptr();
  const real* bv = b.value().ptr();
  real* ov = out.ptr();
  broadcast_loop(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) { ov[o] = fwd(av[i], bv[j]); });

  return make_result(std::move(out), {a, b}, [plan, da, db](Node& self) {
    const auto& g = self.grad();
    const real* x = input_value(self, 0).ptr();
    const real* y = input_value(self, 1).ptr();
    const real* r = self.value.ptr();
    const std::int64_t no = numel(plan.out);
    auto accumulate = [&](std::size_t which, auto partial) {
      if (!wants_grad(self, which)) return;
      auto& dst = input_grad(self, which);
      if (static_cast<std::int64_t>(dst.size()) == no) {
        broadcast_loop(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
          const std::int64_t k = which == 0 ? i : j;
          dst[static_cast<std::size_t>(k)] += g[static_cast<std::size_t>(o)] * partial(x[i], y[j], r[o]);
        });
      } else {
        std::vector<double> acc(dst.size(), 0.0);
        broadcast_loop(plan, [&](std::int64_t o, std::int64_t i, std::int64_t j) {
          const std::int64_t k = which == 0 ? i : j;
          acc[static_cast<std::size_t>(k)] +=
              static_cast<double>(g[static_cast<std::size_t>(o)]) * partial(x[i], y[j], r[o]);
        });
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += static_cast<real>(acc[k]);
      }
    };
    accumulate(0, da);
    accumulate(1, db);
  });
}

template <class Fwd, class Deriv>
Var unary(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const real* xv = x.value().ptr();
  real* ov = out.ptr();
  const std::int64_t n = out.numel();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  return make_result(std::move(out), {x}, [deriv](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dst = input_grad(self, 0);
    const real* xv = input_value(self, 0).ptr();
    const real* yv = self.value.ptr();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x + y; }, [](real, real, real) { return 1.0f; },
      [](real, real, real) { return 1.0f; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x - y; }, [](real, real, real) { return 1.0f; },
      [](real, real, real) { return -1.0f; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x * y; }, [](real, real y, real) { return y; },
      [](real x, real, real) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x / y; }, [](real, real y, real) { return 1.0f / y; },
      [](real, real y, real r) { return -r / y; });
}

// Ties route the gradient to the first operand.
Var maximum(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x >= y ? x : y; },
      [](real x, real y, real) { return x >= y ? 1.0f : 0.0f; },
      [](real x, real y, real) { return x >= y ? 0.0f : 1.0f; });
}

Var minimum(const Var& a, const Var& b) {
  return binary(
      a, b, [](real x, real y) { return x <= y ? x : y; },
      [](real x, real y, real) { return x <= y ? 1.0f : 0.0f; },
      [](real x, real y, real) { return x <= y ? 0.0f : 1.0f; });
}

Var add_scalar(const Var& x, real c) {
  return unary(x, [c](real v) { return v + c; }, [](real, real) { return 1.0f; });
}

Var scale(const Var& x, real c) {
  return unary(x, [c](real v) { return v * c; }, [c](real, real) { return c; });
}

Var neg(const Var& x) { return scale(x, -1.0f); }

Var pointwise(const Var& x, Pointwise kind) {
  switch (kind) {
    case Pointwise::Relu:
      return unary(x, [](real v) { return v > 0.0f || std::isnan(v) ? v : real(0); }, [](real v, real) { return v > 0.0f ? 1.0f : 0.0f; });
    case Pointwise::Gelu:
      return unary(
          x,
          [](real v) {
            const double d = v;
            return static_cast<real>(0.5 * d * (1.0 + std::erf(d / std::numbers::sqrt2)));
          },
          [](real v, real) {
            const double d = v;
            const double cdf = 0.5 * (1.0 + std::erf(d / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * d * d) / std::sqrt(2.0 * std::numbers::pi);
            return static_cast<real>(cdf + d * pdf);
          });
    case Pointwise::Sigmoid:
      return unary(
          x,
          [](real v) {
            if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
            const real e = std::exp(v);
            return e / (1.0f + e);
          },
          [](real, real y) { return y * (1.0f - y); });
    case Pointwise::Tanh:
      return unary(x, [](real v) { return std::tanh(v); }, [](real, real y) { return 1.0f - y * y; });
    case Pointwise::Exp:
      return unary(x, [](real v) { return std::exp(v); }, [](real, real y) { return y; });
    case Pointwise::Log:
      return unary(x, [](real v) { return std::log(v); }, [](real v, real) { return 1.0f / v; });
    case Pointwise::Sqrt:
      return unary(x, [](real v) { return std::sqrt(v); }, [](real, real y) { return 0.5f / y; });
    case Pointwise::Abs:
      return unary(
          x, [](real v) { return std::abs(v); },
          [](real v, real) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
    case Pointwise::Square:
      return unary(x, [](real v) { return v * v; }, [](real v, real) { return 2.0f * v; });
  }
  throw Error("unknown pointwise kind");
}

}  // namespace path_engine::ops

namespace path_engine::inline PATH_ENGINE_NS::ops {

Var lerp(const Var& a, const Var& b, const Var& mu) {
  detail::require(a.shape() == b.shape(), "lerp operand shapes differ: " + shape_str(a.shape()) + " vs " +
                                              shape_str(b.shape()));
  detail::require(mu.numel() == 1, "lerp weight must be a single element");
  const real m = mu.value()[0];
  Tensor out(a.shape());
  const real* av = a.value().ptr();
  const real* bv = b.value().ptr();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const real v = av[i] + m * (bv[i] - av[i]);
    out[i] = std::clamp(v, std::min(av[i], bv[i]), std::max(av[i], bv[i]));
  }
  return make_result(std::move(out), {a, b, mu}, [](Node& self) {
    const auto& g = self.grad();
    const real m = input_value(self, 2)[0];
    const real* av = input_value(self, 0).ptr();
    const real* bv = input_value(self, 1).ptr();
    if (wants_grad(self, 0)) {
      auto& d = input_grad(self, 0);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * (1.0f - m);
    }
    if (wants_grad(self, 1)) {
      auto& d = input_grad(self, 1);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * m;
    }
    if (wants_grad(self, 2)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * (bv[i] - av[i]);
      input_grad(self, 2)[0] += static_cast<real>(acc);
    }
  });
}

}  // namespace path_engine::ops
