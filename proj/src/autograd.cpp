#include "path_engine/autograd.hpp"

#include <unordered_set>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

namespace {
thread_local bool g_grad_enabled = true;
}

std::vector<real>& Node::grad() {
  if (grad_.empty()) grad_.assign(static_cast<std::size_t>(value.numel()), 0.0f);
  return grad_;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad_tensor() const {
  if (!node_->has_grad()) return Tensor(shape(), 0.0f);
  return Tensor(shape(), std::vector<real>(grad().begin(), grad().end()));
}

void Var::backward() const {
  if (numel() != 1) throw DimensionError("backward() without seed needs a single-element root, got " +
                                         shape_str(shape()));
  backward(Tensor(shape(), 1.0f));
}

void Var::backward(const Tensor& seed) const {
  if (seed.shape() != shape()) throw DimensionError("backward seed shape mismatch");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; reversed it is a valid processing order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& root_grad = node_->grad();
  for (std::size_t i = 0; i < root_grad.size(); ++i) root_grad[i] += seed[static_cast<std::int64_t>(i)];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.defined() ? in.node_ptr() : std::make_shared<Node>());
      node->backward_fn = std::move(backward);
    }
  }
  return Var(std::move(node));
}

}  // namespace path_engine
