#include "path_engine/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

int normalize_axis(int axis, std::size_t ndim) {
  const int n = static_cast<int>(ndim);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(n));
  return a;
}

Tensor::Tensor(Shape shape, real fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(path_engine::numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (path_engine::numel(shape_) != static_cast<std::int64_t>(data_.size()))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

Tensor Tensor::from(Shape shape, std::initializer_list<real> values) {
  return Tensor(std::move(shape), std::vector<real>(values));
}

std::int64_t Tensor::dim(int axis) const { return shape_[static_cast<std::size_t>(normalize_axis(axis, ndim()))]; }

real Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= shape_[i]) throw DimensionError("index out of range");
    flat = flat * shape_[i] + v;
    ++i;
  }
  return data_[static_cast<std::size_t>(flat)];
}

real Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (path_engine::numel(shape) != numel())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (real v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool bitwise_equal(std::span<const real> a, std::span<const real> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && bitwise_equal(a.data(), b.data());
}

}  // namespace path_engine
