#include "path_engine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "path_engine/errors.hpp"
#include "path_engine/matching.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

Matrix to_matrix(const Tensor& t) {
  if (t.ndim() != 2) throw DimensionError("to_matrix expects a rank-2 tensor, got " + shape_str(t.shape()));
  const auto rows = t.dim(0), cols = t.dim(1);
  Matrix m(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) m[r][c] = t[r * cols + c];
  return m;
}

double average_precision(const std::vector<bool>& relevant) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < relevant.size(); ++k)
    if (relevant[k]) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  return hits > 0.0 ? sum / hits : 0.0;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: extents differ");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 1.0;
  return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
}

ReidScores reid_map_top1(const Matrix& query, const std::vector<int>& query_ids, const Matrix& gallery,
                         const std::vector<int>& gallery_ids) {
  if (query.size() != query_ids.size() || gallery.size() != gallery_ids.size())
    throw DimensionError("reid_map_top1: embeddings and ids differ in count");
  ReidScores s;
  std::vector<std::size_t> order(gallery.size());
  std::vector<double> dist(gallery.size());
  for (std::size_t q = 0; q < query.size(); ++q) {
    for (std::size_t g = 0; g < gallery.size(); ++g) dist[g] = cosine_distance(query[q], gallery[g]);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::vector<bool> rel(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) rel[k] = gallery_ids[order[k]] == query_ids[q];
    if (std::none_of(rel.begin(), rel.end(), [](bool r) { return r; })) {
      ++s.excluded;
      continue;
    }
    s.map += average_precision(rel);
    s.top1 += rel[0] ? 1.0 : 0.0;
    ++s.evaluated;
  }
  if (s.evaluated > 0) {
    s.map /= static_cast<double>(s.evaluated);
    s.top1 /= static_cast<double>(s.evaluated);
  }
  return s;
}

SegScores miou_pacc(const std::vector<int>& pred, const std::vector<int>& gt, std::int64_t num_classes) {
  if (pred.size() != gt.size()) throw DimensionError("miou_pacc: label maps differ in size");
  if (num_classes < 1) throw ConfigError("miou_pacc: num_classes must be positive");
  std::vector<double> inter(num_classes, 0.0), pred_n(num_classes, 0.0), gt_n(num_classes, 0.0);
  double correct = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= num_classes || gt[i] < 0 || gt[i] >= num_classes)
      throw ConfigError("miou_pacc: label outside [0, " + std::to_string(num_classes) + ")");
    pred_n[pred[i]] += 1.0;
    gt_n[gt[i]] += 1.0;
    if (pred[i] == gt[i]) {
      inter[gt[i]] += 1.0;
      correct += 1.0;
    }
  }
  SegScores s;
  double present = 0.0;
  for (std::int64_t c = 0; c < num_classes; ++c) {
    const double uni = pred_n[c] + gt_n[c] - inter[c];
    if (uni == 0.0) continue;
    s.miou += inter[c] / uni;
    present += 1.0;
  }
  if (present > 0.0) s.miou /= present;
  s.pacc = pred.empty() ? 0.0 : correct / static_cast<double>(pred.size());
  return s;
}

std::vector<std::vector<Keypoint>> heatmap_argmax(const Tensor& heatmaps, std::int64_t* zero) {
  if (heatmaps.ndim() != 4) throw DimensionError("heatmap_argmax expects [B, K, H, W], got " + shape_str(heatmaps.shape()));
  const auto b = heatmaps.dim(0), k = heatmaps.dim(1), h = heatmaps.dim(2), w = heatmaps.dim(3);
  std::vector<std::vector<Keypoint>> out(static_cast<std::size_t>(b), std::vector<Keypoint>(k));
  std::int64_t zeros = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t j = 0; j < k; ++j) {
      const real* m = heatmaps.data().data() + (n * k + j) * h * w;
      std::int64_t best = 0;
      bool all_zero = true;
      for (std::int64_t i = 0; i < h * w; ++i) {
        if (m[i] != 0) all_zero = false;
        if (m[i] > m[best]) best = i;
      }
      if (all_zero) {
        ++zeros;
        best = 0;
      }
      out[n][j] = {static_cast<double>(best % w), static_cast<double>(best / w)};
    }
  if (zero) *zero = zeros;
  return out;
}

PoseScores pck_epe(const std::vector<std::vector<Keypoint>>& pred, const std::vector<std::vector<Keypoint>>& gt,
                   double threshold) {
  if (pred.size() != gt.size()) throw DimensionError("pck_epe: sample counts differ");
  PoseScores s;
  double n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size()) throw DimensionError("pck_epe: keypoint counts differ");
    for (std::size_t j = 0; j < pred[i].size(); ++j) {
      const double d = std::hypot(pred[i][j].x - gt[i][j].x, pred[i][j].y - gt[i][j].y);
      s.epe += d;
      s.pck += d <= threshold ? 1.0 : 0.0;
      n += 1.0;
    }
  }
  if (n > 0.0) {
    s.epe /= n;
    s.pck /= n;
  }
  return s;
}

PoseScores pose_pck_epe(const Tensor& heatmaps, const std::vector<std::vector<Keypoint>>& gt, double threshold) {
  std::int64_t zeros = 0;
  auto s = pck_epe(heatmap_argmax(heatmaps, &zeros), gt, threshold);
  s.zero_heatmaps = zeros;
  return s;
}

AttributeScores attribute_ma(const Matrix& probs, const Matrix& gt, double threshold) {
  if (probs.size() != gt.size()) throw DimensionError("attribute_ma: sample counts differ");
  AttributeScores s;
  if (gt.empty()) return s;
  const auto a = gt[0].size();
  if (a == 0) return s;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt[i].size() != a || probs[i].size() != a) throw DimensionError("attribute_ma: attribute counts differ");
  for (std::size_t j = 0; j < a; ++j) {
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const bool pos = gt[i][j] > 0.5;
      const bool hit = probs[i][j] >= threshold;
      if (pos) (hit ? tp : fn) += 1.0;
      else (hit ? fp : tn) += 1.0;
    }
    const double tpr = tp + fn > 0 ? tp / (tp + fn) : 1.0;
    const double tnr = tn + fp > 0 ? tn / (tn + fp) : 1.0;
    if (tp + fn == 0 || tn + fp == 0) ++s.one_sided;
    s.ma += tpr + tnr;
  }
  s.ma /= 2.0 * static_cast<double>(a);
  return s;
}

std::optional<double> average_precision_50(const std::vector<std::vector<Detection>>& detections,
                                           const std::vector<std::vector<Box>>& gt, double iou_threshold) {
  if (detections.size() != gt.size()) throw DimensionError("average_precision_50: image counts differ");
  std::size_t total = 0;
  for (const auto& g : gt) total += g.size();
  if (total == 0) return std::nullopt;

  struct Ref {
    double score;
    std::size_t image, index;
  };
  std::vector<Ref> refs;
  for (std::size_t i = 0; i < detections.size(); ++i)
    for (std::size_t k = 0; k < detections[i].size(); ++k) refs.push_back({detections[i][k].score, i, k});
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) taken[i].assign(gt[i].size(), false);
  std::vector<double> precision, recall;
  double tp = 0.0, fp = 0.0;
  for (const auto& r : refs) {
    const auto& box = detections[r.image][r.index].box;
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gt[r.image].size(); ++j) {
      const double v = iou(box, gt[r.image][j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best >= iou_threshold && !taken[r.image][best_j]) {
      taken[r.image][best_j] = true;
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    precision.push_back(tp / (tp + fp));
    recall.push_back(tp / static_cast<double>(total));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev) * precision[i];
    prev = recall[i];
  }
  return ap;
}

std::optional<double> detection_ap50(const std::vector<std::vector<Detection>>& detections,
                                     const std::vector<std::vector<Box>>& gt_boxes,
                                     const std::vector<std::vector<int>>& gt_labels) {
  if (detections.size() != gt_boxes.size() || gt_boxes.size() != gt_labels.size())
    throw DimensionError("detection_ap50: image counts differ");
  std::set<int> classes;
  for (std::size_t i = 0; i < gt_labels.size(); ++i) {
    if (gt_labels[i].size() != gt_boxes[i].size()) throw DimensionError("detection_ap50: boxes and labels differ");
    classes.insert(gt_labels[i].begin(), gt_labels[i].end());
  }
  if (classes.empty()) return std::nullopt;
  double sum = 0.0;
  for (int c : classes) {
    std::vector<std::vector<Detection>> det(detections.size());
    std::vector<std::vector<Box>> gt(gt_boxes.size());
    for (std::size_t i = 0; i < detections.size(); ++i) {
      for (const auto& d : detections[i])
        if (d.label == c) det[i].push_back(d);
      for (std::size_t j = 0; j < gt_boxes[i].size(); ++j)
        if (gt_labels[i][j] == c) gt[i].push_back(gt_boxes[i][j]);
    }
    sum += *average_precision_50(det, gt);
  }
  return sum / static_cast<double>(classes.size());
}

CountScores counting_errors(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size()) throw DimensionError("counting_errors: list lengths differ");
  CountScores s;
  if (pred.empty()) return s;
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - gt[i];
    s.mae += std::fabs(e);
    sq += e * e;
  }
  const double n = static_cast<double>(pred.size());
  s.mae /= n;
  s.rmse = std::sqrt(sq / n);
  return s;
}

}  // namespace path_engine
