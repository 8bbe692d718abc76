#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "path_engine/tensor.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

class Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode graph: a value, its gradient buffer, and
/// the closure that pushes the gradient to its inputs.
class Node {
 public:
  Tensor value;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-allocated on first access.
  std::vector<real>& grad();
  bool has_grad() const { return !grad_.empty(); }
  std::span<const real> grad_view() const { return grad_; }
  void clear_grad() { grad_.clear(); }

 private:
  std::vector<real> grad_;
};

/// Per-thread switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::int64_t dim(int axis) const { return node_->value.dim(axis); }
  std::int64_t numel() const { return node_->value.numel(); }
  real item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->has_grad(); }
  /// Gradient values; empty span when none has been accumulated.
  std::span<const real> grad() const { return node_->grad_view(); }
  Tensor grad_tensor() const;
  void zero_grad() { node_->clear_grad(); }

  /// Reverse pass from a single-element root, seeding d(root)/d(root) = 1.
  void backward() const;
  /// Reverse pass with an explicit seed of the root's shape.
  void backward(const Tensor& seed) const;

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

/// Creates the result node of an op. The backward closure is attached only
/// when recording is enabled and some input requires a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

}  // namespace path_engine
