#pragma once

#include <optional>
#include <vector>

#include "path_engine/data.hpp"
#include "path_engine/metrics.hpp"

// Brute-force reference implementations, written from the metric definitions
// without sharing code with the engine.

namespace path_engine::inline PATH_ENGINE_NS::oracle {

/// Mean over queries with a relevant item of sum_k P@k * rel_k / R, ranking by
/// counting strictly closer gallery items (ties broken by index).
double reid_map(const Matrix& query, const std::vector<int>& qid, const Matrix& gallery, const std::vector<int>& gid);
double reid_top1(const Matrix& query, const std::vector<int>& qid, const Matrix& gallery, const std::vector<int>& gid);

/// Per-class pixel index sets, intersections and unions by set operations.
double miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes);
double pacc(const std::vector<int>& pred, const std::vector<int>& gt);

/// Fraction of keypoints within `threshold`, with heatmap peaks found by a
/// full scan per channel.
double pck(const Tensor& heatmaps, const std::vector<std::vector<Keypoint>>& gt, double threshold);

/// Confusion-matrix recount per attribute.
double mean_accuracy(const Matrix& probs, const Matrix& gt, double threshold = 0.5);

/// Enumerates every score threshold, re-runs matching on the surviving
/// detections, and integrates the upper envelope of the resulting PR points.
std::optional<double> ap50(const std::vector<std::vector<Detection>>& det, const std::vector<std::vector<Box>>& gt);

/// GIoU straight from the definition.
double giou(const Box& a, const Box& b);
/// Minimum total cost over every injective row-to-column map (rows <= cols).
double assignment_cost(const std::vector<std::vector<double>>& cost);
/// Pairwise comparison of every pretraining hash against every evaluation hash.
std::vector<std::size_t> duplicates(const std::vector<HashCode>& pretrain, const std::vector<HashCode>& eval);

}  // namespace path_engine::oracle
