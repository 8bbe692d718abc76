#include <cmath>
#include <limits>

#include "ops_internal.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS::ops {

using detail::input_grad;
using detail::input_value;
using detail::require;
using detail::wants_grad;

Var cross_entropy(const Var& logits, const std::vector<int>& labels, const std::vector<real>& class_weights) {
  require(logits.value().ndim() == 2, "cross_entropy expects [M, C] logits");
  const std::int64_t m = logits.dim(0), c = logits.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == m, "cross_entropy label count mismatch");
  require(class_weights.empty() || static_cast<std::int64_t>(class_weights.size()) == c,
          "cross_entropy class weight extent mismatch");
  const real* xv = logits.value().ptr();
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m * c));
  double total = 0.0, weight_sum = 0.0;
  for (std::int64_t r = 0; r < m; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0) continue;
    require(y < c, "cross_entropy label out of range");
    const real* row = xv + r * c;
    real mx = -std::numeric_limits<real>::infinity();
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, row[j]);
    double den = 0.0;
    for (std::int64_t j = 0; j < c; ++j) den += std::exp(static_cast<double>(row[j] - mx));
    for (std::int64_t j = 0; j < c; ++j)
      (*probs)[static_cast<std::size_t>(r * c + j)] = std::exp(static_cast<double>(row[j] - mx)) / den;
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
    total += w * (std::log(den) - static_cast<double>(row[y] - mx));
    weight_sum += w;
  }
  const double norm = weight_sum > 0.0 ? weight_sum : 1.0;
  return make_result(Tensor::scalar(static_cast<real>(total / norm)), {logits},
                     [=](Node& self) {
                       if (!wants_grad(self, 0)) return;
                       const double g = self.grad()[0];
                       auto& dx = input_grad(self, 0);
                       for (std::int64_t r = 0; r < m; ++r) {
                         const int y = labels[static_cast<std::size_t>(r)];
                         if (y < 0) continue;
                         const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(y)];
                         const double f = g * w / norm;
                         for (std::int64_t j = 0; j < c; ++j) {
                           const auto i = static_cast<std::size_t>(r * c + j);
                           dx[i] += static_cast<real>(f * ((*probs)[i] - (j == y ? 1.0 : 0.0)));
                         }
                       }
                     });
}

Var binary_cross_entropy_with_logits(const Var& logits, const Tensor& targets) {
  require(logits.shape() == targets.shape(), "bce target shape mismatch");
  const std::int64_t n = logits.numel();
  require(n > 0, "bce of empty tensor");
  const real* xv = logits.value().ptr();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = xv[i], t = targets[i];
    total += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  return make_result(Tensor::scalar(static_cast<real>(total / static_cast<double>(n))), {logits},
                     [targets, n](Node& self) {
                       if (!wants_grad(self, 0)) return;
                       const double g = self.grad()[0] / static_cast<double>(n);
                       auto& dx = input_grad(self, 0);
                       const real* xv = input_value(self, 0).ptr();
                       for (std::int64_t i = 0; i < n; ++i) {
                         const double x = xv[i];
                         const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                         dx[static_cast<std::size_t>(i)] += static_cast<real>(g * (s - targets[i]));
                       }
                     });
}

Var mse_loss(const Var& prediction, const Tensor& target) {
  require(prediction.shape() == target.shape(),
          "mse target shape mismatch: " + shape_str(prediction.shape()) + " vs " + shape_str(target.shape()));
  const std::int64_t n = prediction.numel();
  require(n > 0, "mse of empty tensor");
  const real* pv = prediction.value().ptr();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pv[i]) - target[i];
    total += d * d;
  }
  return make_result(Tensor::scalar(static_cast<real>(total / static_cast<double>(n))), {prediction},
                     [target, n](Node& self) {
                       if (!wants_grad(self, 0)) return;
                       const double g = 2.0 * self.grad()[0] / static_cast<double>(n);
                       auto& dx = input_grad(self, 0);
                       const real* pv = input_value(self, 0).ptr();
                       for (std::int64_t i = 0; i < n; ++i)
                         dx[static_cast<std::size_t>(i)] += static_cast<real>(g * (static_cast<double>(pv[i]) - target[i]));
                     });
}

}  // namespace path_engine::ops
