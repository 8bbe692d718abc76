#include <numeric>

#include "ops_internal.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops {

using detail::input_grad;
using detail::input_value;
using detail::require;
using detail::split_at;
using detail::wants_grad;

Var sum(const Var& x) {
  double acc = 0.0;
  for (real v : x.value().data()) acc += v;
  return make_result(Tensor::scalar(static_cast<real>(acc)), {x}, [](Node& self) {
    if (!wants_grad(self, 0)) return;
    const real g = self.grad()[0];
    for (auto& d : input_grad(self, 0)) d += g;
  });
}

Var mean(const Var& x) {
  require(x.numel() > 0, "mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<real>(x.numel()));
}

Var sum_axis(const Var& x, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, x.value().ndim());
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim)
    out_shape[static_cast<std::size_t>(ax)] = 1;
  else
    out_shape.erase(out_shape.begin() + ax);
  Tensor out(out_shape);
  const real* xv = x.value().ptr();
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < s.extent; ++k) acc += xv[(o * s.extent + k) * s.inner + i];
      out[o * s.inner + i] = static_cast<real>(acc);
    }
  return make_result(std::move(out), {x}, [s](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dst = input_grad(self, 0);
    for (std::int64_t o = 0; o < s.outer; ++o)
      for (std::int64_t k = 0; k < s.extent; ++k)
        for (std::int64_t i = 0; i < s.inner; ++i)
          dst[static_cast<std::size_t>((o * s.extent + k) * s.inner + i)] += g[static_cast<std::size_t>(o * s.inner + i)];
  });
}

Var mean_axis(const Var& x, int axis, bool keepdim) {
  const int ax = normalize_axis(axis, x.value().ndim());
  const auto extent = x.shape()[static_cast<std::size_t>(ax)];
  require(extent > 0, "mean over empty axis");
  return scale(sum_axis(x, ax, keepdim), 1.0f / static_cast<real>(extent));
}

Var reshape(const Var& x, Shape shape) {
  // One extent may be -1 and is inferred.
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      require(infer < 0, "reshape with more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    require(known > 0 && x.numel() % known == 0, "cannot infer reshape extent");
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dst = input_grad(self, 0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  });
}

namespace {

// Maps each output flat index to the source flat index of a permutation.
std::vector<std::int64_t> permutation_map(const Shape& in, const std::vector<int>& order, Shape& out_shape) {
  const std::size_t rank = in.size();
  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  out_shape.resize(rank);
  std::vector<std::int64_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[static_cast<std::size_t>(order[i])];
    strides[i] = in_strides[static_cast<std::size_t>(order[i])];
  }
  const std::int64_t n = numel(in);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t src = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    map[static_cast<std::size_t>(o)] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

Var gather_flat(const Var& x, Shape out_shape, std::vector<std::int64_t> map) {
  Tensor out(std::move(out_shape));
  const real* xv = x.value().ptr();
  for (std::size_t o = 0; o < map.size(); ++o) out[static_cast<std::int64_t>(o)] = xv[map[o]];
  return make_result(std::move(out), {x}, [map = std::move(map)](Node& self) {
    if (!wants_grad(self, 0)) return;
    const auto& g = self.grad();
    auto& dst = input_grad(self, 0);
    for (std::size_t o = 0; o < map.size(); ++o) dst[static_cast<std::size_t>(map[o])] += g[o];
  });
}

}  // namespace

Var permute(const Var& x, const std::vector<int>& order) {
  const std::size_t rank = x.value().ndim();
  require(order.size() == rank, "permute order rank mismatch");
  std::vector<int> seen(rank, 0);
  for (int o : order) {
    require(o >= 0 && o < static_cast<int>(rank) && !seen[static_cast<std::size_t>(o)]++, "invalid permutation");
  }
  Shape out_shape;
  auto map = permutation_map(x.shape(), order, out_shape);
  return gather_flat(x, std::move(out_shape), std::move(map));
}

Var narrow(const Var& x, int axis, std::int64_t start, std::int64_t length) {
  const int ax = normalize_axis(axis, x.value().ndim());
  const auto s = split_at(x.shape(), ax);
  require(start >= 0 && length >= 0 && start + length <= s.extent, "narrow range out of bounds");
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = length;
  std::vector<std::int64_t> map;
  map.reserve(static_cast<std::size_t>(s.outer * length * s.inner));
  for (std::int64_t o = 0; o < s.outer; ++o)
    for (std::int64_t k = 0; k < length; ++k)
      for (std::int64_t i = 0; i < s.inner; ++i) map.push_back((o * s.extent + start + k) * s.inner + i);
  return gather_flat(x, std::move(out_shape), std::move(map));
}

Var index_select(const Var& x, const std::vector<std::int64_t>& index) {
  require(x.value().ndim() >= 1, "index_select on scalar");
  const auto s = split_at(x.shape(), 0);
  Shape out_shape = x.shape();
  out_shape[0] = static_cast<std::int64_t>(index.size());
  std::vector<std::int64_t> map;
  map.reserve(index.size() * static_cast<std::size_t>(s.inner));
  for (auto r : index) {
    require(r >= 0 && r < s.extent, "index_select row out of range");
    for (std::int64_t i = 0; i < s.inner; ++i) map.push_back(r * s.inner + i);
  }
  return gather_flat(x, std::move(out_shape), std::move(map));
}

Var take(const Var& x, const std::vector<std::int64_t>& flat_index) {
  for (auto i : flat_index) require(i >= 0 && i < x.numel(), "take index out of range");
  return gather_flat(x, Shape{static_cast<std::int64_t>(flat_index.size())}, flat_index);
}

Var concat(const std::vector<Var>& parts, int axis) {
  require(!parts.empty(), "concat of nothing");
  const int ax = normalize_axis(axis, parts[0].value().ndim());
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    require(p.value().ndim() == out_shape.size(), "concat rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d)
      if (static_cast<int>(d) != ax) require(p.shape()[d] == out_shape[d], "concat extent mismatch");
    offsets.push_back(total);
    total += p.shape()[static_cast<std::size_t>(ax)];
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  const auto so = split_at(out_shape, ax);
  Tensor out(out_shape);
  std::vector<detail::AxisSplit> splits;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto sp = split_at(parts[p].shape(), ax);
    splits.push_back(sp);
    const real* src = parts[p].value().ptr();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      for (std::int64_t k = 0; k < sp.extent; ++k)
        for (std::int64_t i = 0; i < sp.inner; ++i)
          out[(o * so.extent + offsets[p] + k) * so.inner + i] = src[(o * sp.extent + k) * sp.inner + i];
  }
  return make_result(std::move(out), parts, [splits, offsets, so](Node& self) {
    const auto& g = self.grad();
    for (std::size_t p = 0; p < splits.size(); ++p) {
      if (!wants_grad(self, p)) continue;
      auto& dst = input_grad(self, p);
      const auto& sp = splits[p];
      for (std::int64_t o = 0; o < sp.outer; ++o)
        for (std::int64_t k = 0; k < sp.extent; ++k)
          for (std::int64_t i = 0; i < sp.inner; ++i)
            dst[static_cast<std::size_t>((o * sp.extent + k) * sp.inner + i)] +=
                g[static_cast<std::size_t>((o * so.extent + offsets[p] + k) * so.inner + i)];
    }
  });
}

}  // namespace path_engine::ops
