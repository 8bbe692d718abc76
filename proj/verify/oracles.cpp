#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace path_engine::inline PATH_ENGINE_NS::oracle {
namespace {

double cos_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 1.0;
  return 1.0 - ab / (std::sqrt(na) * std::sqrt(nb));
}

/// Rank of gallery item g for one query: items closer, or equally close with a lower index, come first.
std::vector<std::size_t> ranking(const std::vector<double>& q, const Matrix& gallery) {
  const auto n = gallery.size();
  std::vector<double> d(n);
  for (std::size_t g = 0; g < n; ++g) d[g] = cos_dist(q, gallery[g]);
  std::vector<std::size_t> at(n);
  for (std::size_t g = 0; g < n; ++g) {
    std::size_t rank = 0;
    for (std::size_t h = 0; h < n; ++h)
      if (d[h] < d[g] || (d[h] == d[g] && h < g)) ++rank;
    at[rank] = g;
  }
  return at;
}

double iou_of(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = (a.x_max - a.x_min) * (a.y_max - a.y_min) + (b.x_max - b.x_min) * (b.y_max - b.y_min) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace

double reid_map(const Matrix& query, const std::vector<int>& qid, const Matrix& gallery, const std::vector<int>& gid) {
  double sum = 0;
  int n = 0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto order = ranking(query[q], gallery);
    int total = 0;
    for (int id : gid) total += id == qid[q];
    if (total == 0) continue;
    double ap = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gid[order[k]] != qid[q]) continue;
      int hits = 0;
      for (std::size_t j = 0; j <= k; ++j) hits += gid[order[j]] == qid[q];
      ap += static_cast<double>(hits) / static_cast<double>(k + 1) / total;
    }
    sum += ap;
    ++n;
  }
  return n ? sum / n : 0.0;
}

double reid_top1(const Matrix& query, const std::vector<int>& qid, const Matrix& gallery, const std::vector<int>& gid) {
  double hits = 0;
  int n = 0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    if (std::count(gid.begin(), gid.end(), qid[q]) == 0) continue;
    hits += gid[ranking(query[q], gallery)[0]] == qid[q];
    ++n;
  }
  return n ? hits / n : 0.0;
}

double miou(const std::vector<int>& pred, const std::vector<int>& gt, int num_classes) {
  double sum = 0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::set<std::size_t> p, g;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c) p.insert(i);
      if (gt[i] == c) g.insert(i);
    }
    std::vector<std::size_t> inter, uni;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(inter));
    std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(uni));
    if (uni.empty()) continue;
    sum += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    ++present;
  }
  return present ? sum / present : 0.0;
}

double pacc(const std::vector<int>& pred, const std::vector<int>& gt) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gt[i];
  return pred.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(pred.size());
}

double pck(const Tensor& heatmaps, const std::vector<std::vector<Keypoint>>& gt, double threshold) {
  const auto b = heatmaps.dim(0), k = heatmaps.dim(1), h = heatmaps.dim(2), w = heatmaps.dim(3);
  double within = 0, total = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t j = 0; j < k; ++j) {
      std::int64_t by = 0, bx = 0;
      double best = -INFINITY;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
          const double v = heatmaps[((n * k + j) * h + y) * w + x];
          if (v > best) {
            best = v;
            by = y;
            bx = x;
          }
        }
      const double dx = static_cast<double>(bx) - gt[n][j].x, dy = static_cast<double>(by) - gt[n][j].y;
      within += std::sqrt(dx * dx + dy * dy) <= threshold;
      total += 1;
    }
  return total ? within / total : 0.0;
}

double mean_accuracy(const Matrix& probs, const Matrix& gt, double threshold) {
  const auto a = gt.at(0).size();
  double sum = 0;
  for (std::size_t j = 0; j < a; ++j) {
    // confusion[truth][predicted]
    double confusion[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < gt.size(); ++i) confusion[gt[i][j] > 0.5][probs[i][j] >= threshold] += 1;
    const double pos = confusion[1][0] + confusion[1][1];
    const double neg = confusion[0][0] + confusion[0][1];
    sum += (pos > 0 ? confusion[1][1] / pos : 1.0) + (neg > 0 ? confusion[0][0] / neg : 1.0);
  }
  return sum / (2.0 * static_cast<double>(a));
}

std::optional<double> ap50(const std::vector<std::vector<Detection>>& det, const std::vector<std::vector<Box>>& gt) {
  std::size_t total = 0;
  for (const auto& g : gt) total += g.size();
  if (total == 0) return std::nullopt;

  std::set<double, std::greater<>> thresholds;
  for (const auto& d : det)
    for (const auto& x : d) thresholds.insert(x.score);

  std::vector<std::pair<double, double>> points;  // (recall, precision)
  for (double t : thresholds) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> kept;
    for (std::size_t i = 0; i < det.size(); ++i)
      for (std::size_t k = 0; k < det[i].size(); ++k)
        if (det[i][k].score >= t) kept.emplace_back(-det[i][k].score, i, k);
    std::sort(kept.begin(), kept.end());
    std::map<std::pair<std::size_t, std::size_t>, bool> used;
    double tp = 0;
    for (auto [s, i, k] : kept) {
      std::size_t arg = 0;
      double best = -1;
      for (std::size_t j = 0; j < gt[i].size(); ++j)
        if (double v = iou_of(det[i][k].box, gt[i][j]); v > best) {
          best = v;
          arg = j;
        }
      if (best >= 0.5 && !used[{i, arg}]) {
        used[{i, arg}] = true;
        tp += 1;
      }
    }
    points.emplace_back(tp / static_cast<double>(total), tp / static_cast<double>(kept.size()));
  }
  double ap = 0, prev = 0;
  std::set<double> recalls;
  for (auto [r, p] : points) recalls.insert(r);
  for (double r : recalls) {
    double env = 0;
    for (auto [r2, p2] : points)
      if (r2 >= r) env = std::max(env, p2);
    ap += (r - prev) * env;
    prev = r;
  }
  return ap;
}

double giou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih, uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min);
  const double ch = std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min);
  return inter / uni - (cw * ch - uni) / (cw * ch);
}

double assignment_cost(const std::vector<std::vector<double>>& cost) {
  const auto rows = cost.size(), cols = cost[0].size();
  std::vector<int> perm(cols);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) total += cost[r][static_cast<std::size_t>(perm[r])];
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<std::size_t> duplicates(const std::vector<HashCode>& pretrain, const std::vector<HashCode>& eval) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pretrain.size(); ++i)
    for (HashCode e : eval)
      if (pretrain[i] == e) {
        out.push_back(i);
        break;
      }
  return out;
}

}  // namespace path_engine::oracle
