#include "path_engine/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

namespace {

using Color = std::array<double, 3>;

constexpr std::array<Color, 6> kPalette{{{0.90, 0.15, 0.15},
                                         {0.15, 0.85, 0.20},
                                         {0.20, 0.30, 0.95},
                                         {0.95, 0.90, 0.15},
                                         {0.90, 0.20, 0.90},
                                         {0.15, 0.90, 0.90}}};
constexpr int kShapeKinds = 4;

enum class Kind { Circle, Square, Triangle, Diamond };

struct Figure {
  Kind kind = Kind::Circle;
  double cx = 0, cy = 0, r = 1;
  Color color{};

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    switch (kind) {
      case Kind::Circle: return dx * dx + dy * dy <= r * r;
      case Kind::Square: return std::fabs(dx) <= r && std::fabs(dy) <= r;
      case Kind::Triangle: return dy >= -r && dy <= r && std::fabs(dx) <= (dy + r) / 2;
      case Kind::Diamond: return std::fabs(dx) + std::fabs(dy) <= r;
    }
    return false;
  }
};

struct Style {
  Color background{};
  double noise = 0.0;
};

Style style_for(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "style"));
  Style s;
  const double base = rng.uniform(0.15, 0.35);
  for (auto& c : s.background) c = base + rng.uniform(-0.05, 0.05);
  s.noise = rng.uniform(0.02, 0.06);
  return s;
}

class Canvas {
 public:
  Canvas(std::int64_t h, std::int64_t w, const Color& bg) : h_(h), w_(w), image_({3, h, w}), labels_(h * w, 0) {
    for (int c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < h * w; ++i) image_[c * h * w + i] = static_cast<real>(bg[c]);
  }

  void draw(const Figure& s, int label = 0) {
    for (std::int64_t y = 0; y < h_; ++y)
      for (std::int64_t x = 0; x < w_; ++x) {
        if (!s.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        for (int c = 0; c < 3; ++c) image_[(c * h_ + y) * w_ + x] = static_cast<real>(s.color[c]);
        labels_[static_cast<std::size_t>(y * w_ + x)] = label;
      }
  }

  void bar(std::int64_t y0, std::int64_t y1, const Color& color) {
    for (std::int64_t y = std::max<std::int64_t>(y0, 0); y < std::min(y1, h_); ++y)
      for (std::int64_t x = 0; x < w_; ++x)
        for (int c = 0; c < 3; ++c) image_[(c * h_ + y) * w_ + x] = static_cast<real>(color[c]);
  }

  void add(std::int64_t x, std::int64_t y, double v) {
    for (int c = 0; c < 3; ++c) image_[(c * h_ + y) * w_ + x] += static_cast<real>(v);
  }

  void noise(double stddev, Rng& rng) {
    for (auto& v : image_.data()) v += static_cast<real>(rng.normal(0.0, stddev));
  }

  std::int64_t h() const { return h_; }
  std::int64_t w() const { return w_; }
  Tensor& image() { return image_; }
  std::vector<int>& labels() { return labels_; }

 private:
  std::int64_t h_, w_;
  Tensor image_;
  std::vector<int> labels_;
};

Color jitter(const Color& c, double amount, Rng& rng) {
  Color out = c;
  for (auto& v : out) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
  return out;
}

Color hue(double t) {
  const double h = 6.0 * (t - std::floor(t));
  const double x = 1.0 - std::fabs(std::fmod(h, 2.0) - 1.0);
  Color c{};
  switch (static_cast<int>(h) % 6) {
    case 0: c = {1, x, 0}; break;
    case 1: c = {x, 1, 0}; break;
    case 2: c = {0, 1, x}; break;
    case 3: c = {0, x, 1}; break;
    case 4: c = {x, 0, 1}; break;
    default: c = {1, 0, x}; break;
  }
  for (auto& v : c) v = 0.1 + 0.85 * v;
  return c;
}

/// Gaussian on the quarter-resolution grid, normalized to unit peak or unit mass.
void splat(Tensor& map, std::int64_t offset, std::int64_t hh, std::int64_t ww, double u, double v, double sigma,
           bool unit_mass) {
  std::vector<double> g(static_cast<std::size_t>(hh * ww));
  double total = 0.0;
  for (std::int64_t j = 0; j < hh; ++j)
    for (std::int64_t i = 0; i < ww; ++i) {
      const double d2 = (i - u) * (i - u) + (j - v) * (j - v);
      total += g[static_cast<std::size_t>(j * ww + i)] = std::exp(-d2 / (2 * sigma * sigma));
    }
  const double scale = unit_mass ? 1.0 / total : 1.0;
  for (std::int64_t k = 0; k < hh * ww; ++k) map[offset + k] += static_cast<real>(g[static_cast<std::size_t>(k)] * scale);
}

void render_reid(Sample& s, std::int64_t index, const DataConfig& cfg, const Style& st, Rng& rng) {
  const auto ids = cfg.num_classes;
  s.id = static_cast<int>(index % ids);
  const double m = static_cast<double>(std::min(cfg.height, cfg.width));
  Figure sh{static_cast<Kind>((s.id / static_cast<int>(kPalette.size())) % kShapeKinds),
           cfg.width * (0.5 + rng.uniform(-0.12, 0.12)), cfg.height * (0.5 + rng.uniform(-0.12, 0.12)),
           m * rng.uniform(0.22, 0.32), jitter(kPalette[static_cast<std::size_t>(s.id) % kPalette.size()], 0.06, rng)};
  Canvas cv(cfg.height, cfg.width, jitter(st.background, 0.04, rng));
  cv.draw(sh);
  cv.noise(st.noise, rng);
  s.image = std::move(cv.image());
}

void render_pose(Sample& s, const DataConfig& cfg, const Style& st, Rng& rng) {
  const auto k = cfg.num_classes;
  const double m = static_cast<double>(std::min(cfg.height, cfg.width));
  const double cx = cfg.width * (0.5 + rng.uniform(-0.08, 0.08)), cy = cfg.height * (0.5 + rng.uniform(-0.08, 0.08));
  const double radius = m * rng.uniform(0.25, 0.34), theta = rng.uniform(0.0, 2.0 * M_PI);
  Canvas cv(cfg.height, cfg.width, st.background);
  cv.draw({Kind::Circle, cx, cy, radius * 0.85, {0.55, 0.55, 0.55}});
  const auto hh = cfg.height / 4, ww = cfg.width / 4;
  s.heatmap = Tensor({k, hh, ww});
  for (std::int64_t j = 0; j < k; ++j) {
    const double a = theta + 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(k);
    const double x = cx + radius * std::cos(a), y = cy + radius * std::sin(a);
    cv.draw({Kind::Circle, x, y, std::max(1.6, 0.06 * m), hue(static_cast<double>(j) / static_cast<double>(k))});
    Keypoint kp{x / 4.0 - 0.5, y / 4.0 - 0.5};
    splat(s.heatmap, j * hh * ww, hh, ww, kp.x, kp.y, 1.0, false);
    s.keypoints.push_back(kp);
  }
  cv.noise(st.noise, rng);
  s.image = std::move(cv.image());
}

void render_parsing(Sample& s, const DataConfig& cfg, const Style& st, Rng& rng) {
  const double m = static_cast<double>(std::min(cfg.height, cfg.width));
  Canvas cv(cfg.height, cfg.width, st.background);
  const auto shapes = rng.integer(1, 3);
  for (std::int64_t i = 0; i < shapes; ++i) {
    const auto kind = static_cast<int>(rng.integer(0, cfg.num_classes - 2));
    Figure sh{static_cast<Kind>(kind), rng.uniform(0.2, 0.8) * cfg.width, rng.uniform(0.2, 0.8) * cfg.height,
             m * rng.uniform(0.12, 0.25), jitter(kPalette[static_cast<std::size_t>(kind)], 0.1, rng)};
    cv.draw(sh, kind + 1);
  }
  cv.noise(st.noise, rng);
  s.pixel_labels = std::move(cv.labels());
  s.image = std::move(cv.image());
}

void render_attribute(Sample& s, const DataConfig& cfg, const Style& st, Rng& rng) {
  const double m = static_cast<double>(std::min(cfg.height, cfg.width));
  const auto kind = static_cast<Kind>(rng.integer(0, kShapeKinds - 1));
  const auto color = static_cast<std::size_t>(rng.integer(0, kPalette.size() - 1));
  const bool large = rng.bernoulli(0.5), second = rng.bernoulli(0.5), bright = rng.bernoulli(0.5),
             stripe = rng.bernoulli(0.5);
  Color bg = st.background;
  if (bright)
    for (auto& c : bg) c += 0.3;
  Canvas cv(cfg.height, cfg.width, bg);
  if (stripe) {
    const auto y0 = static_cast<std::int64_t>(cfg.height * 0.82);
    cv.bar(y0, y0 + std::max<std::int64_t>(2, cfg.height / 12), {0.95, 0.95, 0.95});
  }
  const double cx = cfg.width * rng.uniform(0.3, 0.7);
  Figure main{kind, cx, cfg.height * rng.uniform(0.35, 0.6), m * (large ? rng.uniform(0.27, 0.33) : rng.uniform(0.14, 0.19)),
             jitter(kPalette[color], 0.05, rng)};
  if (second) {
    const double sx = cx < cfg.width / 2.0 ? cfg.width * 0.85 : cfg.width * 0.15;
    cv.draw({Kind::Square, sx, cfg.height * 0.15, m * 0.08, {0.9, 0.9, 0.9}});
  }
  cv.draw(main);
  cv.noise(st.noise, rng);
  const std::array<bool, 8> features{kind == Kind::Circle, kind == Kind::Square, color == 0 || color == 3 || color == 4,
                                     large, second, bright, cx < cfg.width / 2.0, stripe};
  for (std::int64_t a = 0; a < cfg.num_classes; ++a) s.attributes.push_back(features[static_cast<std::size_t>(a)] ? 1.0f : 0.0f);
  s.image = std::move(cv.image());
}

void render_detection(Sample& s, const DataConfig& cfg, const Style& st, Rng& rng) {
  const double m = static_cast<double>(std::min(cfg.height, cfg.width));
  Canvas cv(cfg.height, cfg.width, st.background);
  const auto objects = rng.integer(1, cfg.max_objects);
  for (std::int64_t i = 0; i < objects; ++i) {
    const auto kind = static_cast<int>(rng.integer(0, cfg.num_classes - 1));
    const double r = m * rng.uniform(0.08, 0.18);
    const double cx = rng.uniform(r, cfg.width - r), cy = rng.uniform(r, cfg.height - r);
    cv.draw({static_cast<Kind>(kind), cx, cy, r, jitter(kPalette[static_cast<std::size_t>(kind)], 0.1, rng)});
    const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
    s.boxes.push_back({std::clamp((cx - r) / w, 0.0, 1.0), std::clamp((cy - r) / h, 0.0, 1.0),
                       std::clamp((cx + r) / w, 0.0, 1.0), std::clamp((cy + r) / h, 0.0, 1.0)});
    s.box_labels.push_back(kind);
  }
  cv.noise(st.noise, rng);
  s.image = std::move(cv.image());
}

void render_counting(Sample& s, const DataConfig& cfg, const Style& st, Rng& rng) {
  Canvas cv(cfg.height, cfg.width, st.background);
  const auto blobs = rng.integer(0, cfg.max_blobs);
  const auto hh = cfg.height / 4, ww = cfg.width / 4;
  s.density = Tensor({1, hh, ww});
  constexpr double sigma = 1.5;
  for (std::int64_t b = 0; b < blobs; ++b) {
    const double x = rng.uniform(2.0, cfg.width - 2.0), y = rng.uniform(2.0, cfg.height - 2.0);
    for (std::int64_t py = 0; py < cfg.height; ++py)
      for (std::int64_t px = 0; px < cfg.width; ++px) {
        const double dx = px + 0.5 - x, dy = py + 0.5 - y;
        const double v = 0.7 * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        if (v > 1e-4) cv.add(px, py, v);
      }
    splat(s.density, 0, hh, ww, x / 4.0 - 0.5, y / 4.0 - 0.5, 1.0, true);
  }
  s.count = static_cast<double>(blobs);
  cv.noise(st.noise, rng);
  s.image = std::move(cv.image());
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Pretrain: return "pretrain";
    case Split::InEval: return "in-eval";
    case Split::OutEval: return "out-eval";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "pretrain") return Split::Pretrain;
  if (text == "in-eval") return Split::InEval;
  if (text == "out-eval") return Split::OutEval;
  throw ConfigError("unknown split '" + text + "'");
}

std::int64_t default_num_classes(TaskFamily family) {
  switch (family) {
    case TaskFamily::ReID: return 12;
    case TaskFamily::Pose: return 4;
    case TaskFamily::Parsing: return 4;
    case TaskFamily::Attribute: return 6;
    case TaskFamily::Detection: return 3;
    case TaskFamily::Counting: return 1;
  }
  return 1;
}

std::int64_t max_num_classes(TaskFamily family) {
  switch (family) {
    case TaskFamily::ReID: return static_cast<std::int64_t>(kPalette.size()) * kShapeKinds;
    case TaskFamily::Pose: return 8;
    case TaskFamily::Parsing: return kShapeKinds + 1;
    case TaskFamily::Attribute: return 8;
    case TaskFamily::Detection: return kShapeKinds;
    case TaskFamily::Counting: return 1;
  }
  return 1;
}

void DataConfig::validate(TaskFamily family) const {
  if (height < 8 || width < 8 || height % 4 || width % 4)
    throw ConfigError("synthetic images must be at least 8x8 and divisible by 4, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  const auto n = num_classes == 0 ? default_num_classes(family) : num_classes;
  const std::int64_t lo = family == TaskFamily::Parsing ? 2 : 1;
  if (n < lo || n > max_num_classes(family))
    throw ConfigError(to_string(family) + " supports " + std::to_string(lo) + ".." +
                      std::to_string(max_num_classes(family)) + " classes, got " + std::to_string(n));
  if (max_objects < 1) throw ConfigError("max_objects must be at least 1");
  if (max_blobs < 0) throw ConfigError("max_blobs must be non-negative");
}

SyntheticDataset generate(TaskFamily family, std::uint64_t seed, std::int64_t n, const DataConfig& config,
                          std::int64_t first_index, Split split) {
  if (n < 1) throw ConfigError("dataset size must be at least 1");
  config.validate(family);
  SyntheticDataset ds{family, seed, split, config, {}};
  if (ds.config.num_classes == 0) ds.config.num_classes = default_num_classes(family);
  const Style style = style_for(seed);
  const std::string stream = to_string(family);
  ds.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto index = first_index + i;
    Rng rng(derive_seed(seed, stream + "/" + std::to_string(index)));
    auto& s = ds.samples[static_cast<std::size_t>(i)];
    switch (family) {
      case TaskFamily::ReID: render_reid(s, index, ds.config, style, rng); break;
      case TaskFamily::Pose: render_pose(s, ds.config, style, rng); break;
      case TaskFamily::Parsing: render_parsing(s, ds.config, style, rng); break;
      case TaskFamily::Attribute: render_attribute(s, ds.config, style, rng); break;
      case TaskFamily::Detection: render_detection(s, ds.config, style, rng); break;
      case TaskFamily::Counting: render_counting(s, ds.config, style, rng); break;
    }
  }
  return ds;
}

Batch SyntheticDataset::collate(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("empty batch");
  const auto b = static_cast<std::int64_t>(indices.size());
  const auto h = config.height, w = config.width, plane = 3 * h * w;
  Batch batch{.family = family, .images = Tensor({b, 3, h, w})};
  auto stack = [&](const Tensor& first, auto field) {
    Shape shape{b};
    shape.insert(shape.end(), first.shape().begin(), first.shape().end());
    Tensor out(shape);
    for (std::int64_t i = 0; i < b; ++i) {
      const Tensor& t = field(samples.at(indices[static_cast<std::size_t>(i)]));
      std::copy(t.data().begin(), t.data().end(), out.ptr() + i * first.numel());
    }
    return out;
  };
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& s = samples.at(indices[static_cast<std::size_t>(i)]);
    std::copy(s.image.data().begin(), s.image.data().end(), batch.images.ptr() + i * plane);
  }
  const auto& first = samples.at(indices[0]);
  switch (family) {
    case TaskFamily::ReID:
      for (auto i : indices) batch.ids.push_back(samples.at(i).id);
      break;
    case TaskFamily::Pose:
      batch.heatmaps = stack(first.heatmap, [](const Sample& s) -> const Tensor& { return s.heatmap; });
      for (auto i : indices) batch.keypoints.push_back(samples.at(i).keypoints);
      break;
    case TaskFamily::Parsing:
      for (auto i : indices)
        batch.pixel_labels.insert(batch.pixel_labels.end(), samples.at(i).pixel_labels.begin(),
                                  samples.at(i).pixel_labels.end());
      break;
    case TaskFamily::Attribute: {
      const auto a = static_cast<std::int64_t>(first.attributes.size());
      batch.attributes = Tensor({b, a});
      for (std::int64_t i = 0; i < b; ++i)
        std::copy(samples.at(indices[static_cast<std::size_t>(i)]).attributes.begin(),
                  samples.at(indices[static_cast<std::size_t>(i)]).attributes.end(), batch.attributes.ptr() + i * a);
      break;
    }
    case TaskFamily::Detection:
      for (auto i : indices) {
        batch.boxes.push_back(samples.at(i).boxes);
        batch.box_labels.push_back(samples.at(i).box_labels);
      }
      break;
    case TaskFamily::Counting:
      batch.density = stack(first.density, [](const Sample& s) -> const Tensor& { return s.density; });
      for (auto i : indices) batch.counts.push_back(samples.at(i).count);
      break;
  }
  return batch;
}

BatchSampler::BatchSampler(const SyntheticDataset& data, std::uint64_t seed, std::int64_t per_identity)
    : data_(&data), rng_(seed), per_identity_(per_identity) {
  if (data.family != TaskFamily::ReID) return;
  if (per_identity < 2) throw ConfigError("reid batches need at least 2 images per identity");
  for (std::size_t i = 0; i < data.size(); ++i) by_id_[data.samples[i].id].push_back(i);
  for (const auto& [id, list] : by_id_)
    if (static_cast<std::int64_t>(list.size()) >= per_identity) ids_.push_back(id);
  if (ids_.size() < 2) throw ConfigError("reid dataset needs two identities with enough images");
}

std::vector<std::size_t> BatchSampler::next_indices(std::int64_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> out;
  if (data_->family != TaskFamily::ReID) {
    for (std::int64_t i = 0; i < batch_size; ++i)
      out.push_back(static_cast<std::size_t>(rng_.integer(0, static_cast<std::int64_t>(data_->size()) - 1)));
    return out;
  }
  if (batch_size % per_identity_ != 0)
    throw ConfigError("reid batch size " + std::to_string(batch_size) + " is not a multiple of " +
                      std::to_string(per_identity_));
  const auto groups = batch_size / per_identity_;
  if (groups > static_cast<std::int64_t>(ids_.size()))
    throw ConfigError("reid batch needs " + std::to_string(groups) + " identities, dataset has " +
                      std::to_string(ids_.size()));
  auto ids = ids_;
  std::shuffle(ids.begin(), ids.end(), rng_.engine());
  for (std::int64_t g = 0; g < groups; ++g) {
    auto pool = by_id_.at(ids[static_cast<std::size_t>(g)]);
    std::shuffle(pool.begin(), pool.end(), rng_.engine());
    out.insert(out.end(), pool.begin(), pool.begin() + per_identity_);
  }
  return out;
}

Batch BatchSampler::next(std::int64_t batch_size) { return data_->collate(next_indices(batch_size)); }

HashCode dhash(const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) throw DimensionError("dhash expects a [3, H, W] image");
  const auto h = image.dim(1), w = image.dim(2);
  std::vector<double> gray(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h * w; ++i)
    gray[static_cast<std::size_t>(i)] = 0.299 * image[i] + 0.587 * image[h * w + i] + 0.114 * image[2 * h * w + i];

  constexpr int kCols = 9, kRows = 8;
  // Area resize: each output cell averages the source pixels it covers,
  // weighting partially covered pixels by their overlap.
  auto overlap = [](double lo, double hi, std::int64_t p) {
    return std::max(0.0, std::min(hi, static_cast<double>(p + 1)) - std::max(lo, static_cast<double>(p)));
  };
  // Offsets from one reference pixel keep a constant image exactly constant
  // after the weighted averaging.
  const double ref = gray[0];
  std::array<double, kCols * kRows> cell{};
  for (int r = 0; r < kRows; ++r) {
    const double y0 = static_cast<double>(r) * h / kRows, y1 = static_cast<double>(r + 1) * h / kRows;
    for (int c = 0; c < kCols; ++c) {
      const double x0 = static_cast<double>(c) * w / kCols, x1 = static_cast<double>(c + 1) * w / kCols;
      double acc = 0.0, area = 0.0;
      for (auto y = static_cast<std::int64_t>(y0); y < std::min<std::int64_t>(h, static_cast<std::int64_t>(std::ceil(y1))); ++y) {
        const double wy = overlap(y0, y1, y);
        for (auto x = static_cast<std::int64_t>(x0); x < std::min<std::int64_t>(w, static_cast<std::int64_t>(std::ceil(x1))); ++x) {
          const double wgt = wy * overlap(x0, x1, x);
          acc += wgt * (gray[static_cast<std::size_t>(y * w + x)] - ref);
          area += wgt;
        }
      }
      cell[static_cast<std::size_t>(r * kCols + c)] = acc / area;
    }
  }
  HashCode code = 0;
  for (int r = 0; r < kRows; ++r)
    for (int c = 0; c < kCols - 1; ++c)
      if (cell[static_cast<std::size_t>(r * kCols + c)] < cell[static_cast<std::size_t>(r * kCols + c + 1)])
        code |= HashCode{1} << (r * 8 + c);
  return code;
}

int hamming(HashCode a, HashCode b) { return std::popcount(a ^ b); }

DedupResult dedup(const std::vector<HashCode>& pretrain, const std::vector<HashCode>& eval) {
  const std::unordered_set<HashCode> banned(eval.begin(), eval.end());
  DedupResult out;
  for (std::size_t i = 0; i < pretrain.size(); ++i) (banned.count(pretrain[i]) ? out.removed : out.kept).push_back(i);
  return out;
}

DedupResult dedup(const SyntheticDataset& pretrain, const SyntheticDataset& eval) {
  std::vector<HashCode> a, b;
  for (const auto& s : pretrain.samples) a.push_back(dhash(s.image));
  for (const auto& s : eval.samples) b.push_back(dhash(s.image));
  return dedup(a, b);
}

SyntheticDataset select(const SyntheticDataset& data, const std::vector<std::size_t>& kept) {
  SyntheticDataset out{data.family, data.seed, data.split, data.config, {}};
  for (auto i : kept) out.samples.push_back(data.samples.at(i));
  return out;
}

std::vector<std::size_t> temporal_subsample(std::size_t frames, std::size_t stride) {
  if (stride == 0) throw ConfigError("subsample stride must be positive");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frames; i += stride) out.push_back(i);
  return out;
}

std::set<std::string> identity_filter(const std::map<std::string, std::int64_t>& counts, std::int64_t lo,
                                      std::int64_t hi) {
  std::set<std::string> out;
  for (const auto& [id, n] : counts)
    if (n >= lo && n <= hi) out.insert(id);
  return out;
}

namespace {

void write_f32(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  for (real v : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(bytes, 4);
  }
  if (!os) throw Error("cannot write " + path.string());
}

std::string numbered(std::size_t i, const char* ext) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i << ext;
  return os.str();
}

}  // namespace

void export_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  const char* extra = nullptr;
  switch (data.family) {
    case TaskFamily::Pose: extra = "heatmaps"; break;
    case TaskFamily::Parsing: extra = "masks"; break;
    case TaskFamily::Counting: extra = "density"; break;
    default: break;
  }
  if (extra) fs::create_directories(dir / extra);

  std::ofstream labels(dir / "labels.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    const auto image = "images/" + numbered(i, ".f32");
    write_f32(dir / image, s.image);
    nlohmann::json rec{{"index", i}, {"image", image}};
    switch (data.family) {
      case TaskFamily::ReID: rec["id"] = s.id; break;
      case TaskFamily::Pose: {
        auto kps = nlohmann::json::array();
        for (const auto& k : s.keypoints) kps.push_back({k.x, k.y});
        rec["keypoints"] = kps;
        rec["heatmap"] = std::string("heatmaps/") + numbered(i, ".f32");
        write_f32(dir / rec["heatmap"].get<std::string>(), s.heatmap);
        break;
      }
      case TaskFamily::Parsing: {
        rec["mask"] = std::string("masks/") + numbered(i, ".u8");
        std::ofstream os(dir / rec["mask"].get<std::string>(), std::ios::binary | std::ios::trunc);
        for (int v : s.pixel_labels) os.put(static_cast<char>(v));
        break;
      }
      case TaskFamily::Attribute: {
        auto a = nlohmann::json::array();
        for (real v : s.attributes) a.push_back(static_cast<int>(v));
        rec["attributes"] = a;
        break;
      }
      case TaskFamily::Detection: {
        auto boxes = nlohmann::json::array();
        for (const auto& b : s.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
        rec["boxes"] = boxes;
        rec["labels"] = s.box_labels;
        break;
      }
      case TaskFamily::Counting:
        rec["count"] = s.count;
        rec["density"] = std::string("density/") + numbered(i, ".f32");
        write_f32(dir / rec["density"].get<std::string>(), s.density);
        break;
    }
    labels << rec.dump() << "\n";
  }

  nlohmann::json manifest{{"family", to_string(data.family)},
                          {"seed", data.seed},
                          {"split", to_string(data.split)},
                          {"count", data.size()},
                          {"channels", 3},
                          {"height", data.config.height},
                          {"width", data.config.width},
                          {"num_classes", data.config.num_classes},
                          {"dtype", "float32-le"},
                          {"layout", "CHW"},
                          {"labels", "labels.jsonl"}};
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << "\n";
}

}  // namespace path_engine
