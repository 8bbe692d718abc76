#pragma once

#include <vector>

#include "path_engine/autograd.hpp"
#include "path_engine/task.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

double iou(const Box& a, const Box& b);
/// IoU - (|C| - |A u B|) / |C| with C the smallest enclosing box. A zero-area
/// union gives IoU 0 and a zero-area enclosure gives 0 overall.
double giou(const Box& a, const Box& b);

/// GIoU of each row of `pred` [M, 4] against the matching row of `target`.
/// Rows are (x_min, y_min, x_max, y_max). Differentiable in `pred`.
Var giou_rows(const Var& pred, const Tensor& target, real eps = 1e-7f);

struct Assignment {
  /// assigned column for each row
  std::vector<int> column_of_row;
  double cost = 0.0;
};

/// Minimum-cost assignment of every row to a distinct column of a rows x cols
/// cost matrix (rows <= cols).
Assignment hungarian(const std::vector<std::vector<double>>& cost);

struct MatchWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double iou = 2.0;
  bool operator==(const MatchWeights&) const = default;
};

/// Cost of predicting ground truth j with query i:
///   w.cls * (1 - prob[i][class_j]) + w.l1 * |b_i - b_j|_1 + w.iou * (1 - giou(b_i, b_j)).
/// Rows of the result are ground truths, columns are queries.
std::vector<std::vector<double>> match_cost(const std::vector<std::vector<double>>& class_prob,
                                            const std::vector<Box>& pred, const std::vector<Box>& gt,
                                            const std::vector<int>& gt_labels, const MatchWeights& w);

/// Assigns each ground-truth box a distinct prediction; more ground truths than
/// predictions is a configuration error.
Assignment hungarian_match(const std::vector<std::vector<double>>& class_prob, const std::vector<Box>& pred,
                           const std::vector<Box>& gt, const std::vector<int>& gt_labels, const MatchWeights& w);

}  // namespace path_engine
