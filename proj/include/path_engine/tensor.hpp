#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "path_engine/real.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense f32 array in row-major order. Plain value type; gradients live on
/// the autograd node that owns a Tensor (see Var).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = 0.0f);
  Tensor(Shape shape, std::vector<real> data);

  static Tensor scalar(real value) { return Tensor({1}, value); }
  static Tensor from(Shape shape, std::initializer_list<real> values);

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  /// Extent of axis `axis`; negative values count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<real> data() { return data_; }
  std::span<const real> data() const { return data_; }
  real* ptr() { return data_.data(); }
  const real* ptr() const { return data_.data(); }
  std::vector<real>& storage() { return data_; }

  real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  real at(std::initializer_list<std::int64_t> index) const;
  real item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  /// Elementwise value comparison (NaN never equal).
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<real> data_;
};

/// Byte-level equality of shape and payload.
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool bitwise_equal(std::span<const real> a, std::span<const real> b);

int normalize_axis(int axis, std::size_t ndim);

}  // namespace path_engine
