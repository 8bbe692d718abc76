#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "path_engine/task.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

using Matrix = std::vector<std::vector<double>>;

/// Rows of a rank-2 tensor.
Matrix to_matrix(const Tensor& t);

/// Mean over relevant positions of precision at that rank; `relevant` is in
/// ranking order. Zero relevant items gives 0.
double average_precision(const std::vector<bool>& relevant);

/// 1 - cosine similarity; a zero vector is at distance 1 from everything.
double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

struct ReidScores {
  double map = 0.0;
  double top1 = 0.0;
  std::int64_t evaluated = 0;
  /// Queries without a relevant gallery item; excluded from both means.
  std::int64_t excluded = 0;
};

/// Gallery ranked by cosine distance, ties by gallery index.
ReidScores reid_map_top1(const Matrix& query, const std::vector<int>& query_ids, const Matrix& gallery,
                         const std::vector<int>& gallery_ids);

struct SegScores {
  double miou = 0.0;
  double pacc = 0.0;
};

/// Classes absent from both prediction and ground truth are left out of mIoU.
SegScores miou_pacc(const std::vector<int>& pred, const std::vector<int>& gt, std::int64_t num_classes);

struct PoseScores {
  double pck = 0.0;
  double epe = 0.0;
  std::int64_t zero_heatmaps = 0;
};

/// Per-channel argmax of [B, K, H, W] heatmaps (first maximum in row-major
/// order); an all-zero channel decodes to (0, 0) and is counted in `zero`.
std::vector<std::vector<Keypoint>> heatmap_argmax(const Tensor& heatmaps, std::int64_t* zero = nullptr);

PoseScores pck_epe(const std::vector<std::vector<Keypoint>>& pred, const std::vector<std::vector<Keypoint>>& gt,
                   double threshold);
PoseScores pose_pck_epe(const Tensor& heatmaps, const std::vector<std::vector<Keypoint>>& gt, double threshold);

struct AttributeScores {
  double ma = 0.0;
  /// Attributes whose ground truth lacks positives or negatives.
  std::int64_t one_sided = 0;
};

/// (1 / 2A) sum_a (TPR_a + TNR_a); a side without ground-truth samples counts as 1.
AttributeScores attribute_ma(const Matrix& probs, const Matrix& gt, double threshold = 0.5);

struct Detection {
  Box box;
  double score = 0.0;
  int label = 0;
};

/// AP at IoU 0.5 for one class: detections of all images sorted by score,
/// each matched to its highest-IoU ground truth, which an earlier detection
/// may already hold (then it is a false positive). All-point interpolation.
/// nullopt when there is no ground truth.
std::optional<double> average_precision_50(const std::vector<std::vector<Detection>>& detections,
                                           const std::vector<std::vector<Box>>& gt, double iou_threshold = 0.5);

/// Mean of the per-class AP50 over classes present in the ground truth.
std::optional<double> detection_ap50(const std::vector<std::vector<Detection>>& detections,
                                     const std::vector<std::vector<Box>>& gt_boxes,
                                     const std::vector<std::vector<int>>& gt_labels);

struct CountScores {
  double mae = 0.0;
  double rmse = 0.0;
};

CountScores counting_errors(const std::vector<double>& pred, const std::vector<double>& gt);

}  // namespace path_engine
