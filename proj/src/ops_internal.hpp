#pragma once

#include <string>
#include <vector>

#include "path_engine/autograd.hpp"
#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops::detail {

inline bool wants_grad(const Node& self, std::size_t input) { return self.inputs[input]->requires_grad; }
inline std::vector<real>& input_grad(Node& self, std::size_t input) { return self.inputs[input]->grad(); }
inline const Tensor& input_value(const Node& self, std::size_t input) { return self.inputs[input]->value; }

inline void require(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

/// Splits a shape into (outer, axis extent, inner) around `axis`.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};
inline AxisSplit split_at(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace path_engine::ops::detail
