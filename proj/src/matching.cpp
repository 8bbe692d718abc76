#include "path_engine/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "path_engine/errors.hpp"
#include "path_engine/ops.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

namespace {

double intersection(const Box& a, const Box& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  return std::max(w, 0.0) * std::max(h, 0.0);
}

// Fixed operand order keeps the results exactly symmetric under FMA contraction.
bool ordered(const Box& a, const Box& b) {
  return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <= std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

}  // namespace

double iou(const Box& a, const Box& b) {
  if (!ordered(a, b)) return iou(b, a);
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const Box& a, const Box& b) {
  if (!ordered(a, b)) return giou(b, a);
  const double inter = intersection(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclosing = (std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min)) *
                           (std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min));
  if (enclosing <= 0.0) return 0.0;
  const double i = uni > 0.0 ? inter / uni : 0.0;
  return i - (enclosing - uni) / enclosing;
}

Var giou_rows(const Var& pred, const Tensor& target, real eps) {
  if (pred.shape().size() != 2 || pred.dim(1) != 4 || target.shape() != pred.shape())
    throw DimensionError("giou_rows expects matching [M, 4] boxes, got " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()));
  Var t(target);
  auto col = [](const Var& v, int c) { return ops::narrow(v, 1, c, 1); };
  Var px1 = col(pred, 0), py1 = col(pred, 1), px2 = col(pred, 2), py2 = col(pred, 3);
  Var tx1 = col(t, 0), ty1 = col(t, 1), tx2 = col(t, 2), ty2 = col(t, 3);

  Var area_p = ops::mul(ops::sub(px2, px1), ops::sub(py2, py1));
  Var area_t = ops::mul(ops::sub(tx2, tx1), ops::sub(ty2, ty1));
  Var iw = ops::relu(ops::sub(ops::minimum(px2, tx2), ops::maximum(px1, tx1)));
  Var ih = ops::relu(ops::sub(ops::minimum(py2, ty2), ops::maximum(py1, ty1)));
  Var inter = ops::mul(iw, ih);
  Var uni = ops::sub(ops::add(area_p, area_t), inter);
  Var iou_term = ops::div(inter, ops::add_scalar(uni, eps));
  Var cw = ops::sub(ops::maximum(px2, tx2), ops::minimum(px1, tx1));
  Var ch = ops::sub(ops::maximum(py2, ty2), ops::minimum(py1, ty1));
  Var enclosing = ops::mul(cw, ch);
  Var slack = ops::div(ops::sub(enclosing, uni), ops::add_scalar(enclosing, eps));
  return ops::reshape(ops::sub(iou_term, slack), {pred.dim(0)});
}

Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  Assignment out;
  if (n == 0) return out;
  const int m = static_cast<int>(cost[0].size());
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != m) throw DimensionError("hungarian: ragged cost matrix");
  if (n > m)
    throw ConfigError("hungarian: " + std::to_string(n) + " rows cannot be assigned to " + std::to_string(m) +
                      " columns");

  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> row_of_col(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = row_of_col[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const int j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.column_of_row.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (row_of_col[j] != 0) out.column_of_row[static_cast<std::size_t>(row_of_col[j] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost[i][out.column_of_row[i]];
  return out;
}

std::vector<std::vector<double>> match_cost(const std::vector<std::vector<double>>& class_prob,
                                            const std::vector<Box>& pred, const std::vector<Box>& gt,
                                            const std::vector<int>& gt_labels, const MatchWeights& w) {
  if (class_prob.size() != pred.size()) throw DimensionError("match_cost: one probability row per prediction");
  if (gt_labels.size() != gt.size()) throw DimensionError("match_cost: one label per ground truth");
  std::vector<std::vector<double>> cost(gt.size(), std::vector<double>(pred.size()));
  for (std::size_t j = 0; j < gt.size(); ++j) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto& p = pred[i];
      const auto& g = gt[j];
      const double l1 = std::fabs(p.x_min - g.x_min) + std::fabs(p.y_min - g.y_min) + std::fabs(p.x_max - g.x_max) +
                        std::fabs(p.y_max - g.y_max);
      const double prob = class_prob[i].at(static_cast<std::size_t>(gt_labels[j]));
      cost[j][i] = w.cls * (1.0 - prob) + w.l1 * l1 + w.iou * (1.0 - giou(p, g));
    }
  }
  return cost;
}

Assignment hungarian_match(const std::vector<std::vector<double>>& class_prob, const std::vector<Box>& pred,
                           const std::vector<Box>& gt, const std::vector<int>& gt_labels, const MatchWeights& w) {
  if (gt.size() > pred.size())
    throw ConfigError(std::to_string(gt.size()) + " ground truths exceed " + std::to_string(pred.size()) +
                      " predictions");
  return hungarian(match_cost(class_prob, pred, gt, gt_labels, w));
}

}  // namespace path_engine
