#include "path_engine/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

void HeadConfig::validate(std::int64_t embed_dim) const {
  if (num_outputs < 1) throw ConfigError("head num_outputs must be at least 1");
  if (hidden < 1) throw ConfigError("head hidden width must be at least 1");
  if (triplet_margin < 0.0) throw ConfigError("triplet margin must be non-negative");
  if (family == TaskFamily::Detection) {
    if (num_queries < 1) throw ConfigError("detection head needs at least one query");
    if (decoder_layers < 1) throw ConfigError("detection head needs at least one decoder layer");
    if (decoder_heads < 1 || embed_dim % decoder_heads != 0)
      throw ConfigError("decoder_heads must divide embed_dim");
    if (detection_weights.cls < 0 || detection_weights.l1 < 0 || detection_weights.iou < 0 || no_object_weight < 0)
      throw ConfigError("detection loss weights must be non-negative");
  }
}

std::unique_ptr<Head> make_head(const HeadConfig& config, ParamStore& store, const std::string& prefix,
                                std::int64_t embed_dim, int depth_index) {
  config.validate(embed_dim);
  switch (config.family) {
    case TaskFamily::ReID: return std::make_unique<ReidHead>(config, store, prefix, embed_dim, depth_index);
    case TaskFamily::Pose: return std::make_unique<PoseHead>(config, store, prefix, embed_dim, depth_index);
    case TaskFamily::Parsing: return std::make_unique<ParsingHead>(config, store, prefix, embed_dim, depth_index);
    case TaskFamily::Attribute: return std::make_unique<AttributeHead>(config, store, prefix, embed_dim, depth_index);
    case TaskFamily::Detection: return std::make_unique<DetectionHead>(config, store, prefix, embed_dim, depth_index);
    case TaskFamily::Counting: return std::make_unique<CountingHead>(config, store, prefix, embed_dim, depth_index);
  }
  throw ConfigError("unknown head family");
}

double triplet_loss(double d_p, double d_n, double margin) { return std::max(d_p - d_n + margin, 0.0); }

Var batch_hard_triplet(const Var& embeddings, const std::vector<int>& ids, double margin) {
  const auto b = embeddings.dim(0), d = embeddings.dim(1);
  if (static_cast<std::int64_t>(ids.size()) != b) throw DimensionError("triplet: one id per embedding");
  Var diff = ops::sub(ops::reshape(embeddings, {b, 1, d}), ops::reshape(embeddings, {1, b, d}));
  Var dist = ops::sqrt(ops::add_scalar(ops::sum_axis(ops::square(diff), 2), 1e-12f));
  const auto& dv = dist.value();

  std::vector<std::int64_t> pos, neg;
  for (std::int64_t a = 0; a < b; ++a) {
    std::int64_t hp = -1, hn = -1;
    for (std::int64_t j = 0; j < b; ++j) {
      if (j == a) continue;
      const real v = dv[a * b + j];
      if (ids[j] == ids[a]) {
        if (hp < 0 || v > dv[a * b + hp]) hp = j;
      } else if (hn < 0 || v < dv[a * b + hn]) {
        hn = j;
      }
    }
    if (hp >= 0 && hn >= 0) {
      pos.push_back(a * b + hp);
      neg.push_back(a * b + hn);
    }
  }
  if (pos.empty()) return Var(Tensor::scalar(0.0f));
  Var gap = ops::sub(ops::take(dist, pos), ops::take(dist, neg));
  return ops::mean(ops::relu(ops::add_scalar(gap, static_cast<real>(margin))));
}

Var aggregate_loss(const std::vector<Var>& losses, const std::vector<double>& weights) {
  if (losses.size() != weights.size()) throw DimensionError("aggregate_loss: one weight per loss");
  if (losses.empty()) throw DimensionError("aggregate_loss: no losses");
  Var total;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ConfigError("loss weights must be non-negative");
    Var term = ops::scale(losses[i], static_cast<real>(weights[i]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

// -- reid ---------------------------------------------------------------------

ReidHead::ReidHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth)
    : config_(config) {
  const ParamOptions opt{.depth_index = depth};
  bn_ = nn::BatchNorm(store, prefix + ".bn", dim, opt);
  auto rng = store.init_rng(prefix + ".classifier.weight");
  classifier_.weight =
      &store.create(prefix + ".classifier.weight", normal_tensor({dim, config.num_outputs}, 0.0, 0.001, rng), opt);
}

Var ReidHead::embed(const FeatureMap& p, bool training) const {
  return bn_(p.pooled(), training ? ops::BatchNormMode::Train : ops::BatchNormMode::Eval);
}

Var ReidHead::loss(const FeatureMap& p, const Batch& batch, bool training) const {
  Var z = embed(p, training);
  return ops::add(ops::cross_entropy(logits(z), batch.ids), batch_hard_triplet(z, batch.ids, config_.triplet_margin));
}

// -- pose ---------------------------------------------------------------------

PoseHead::PoseHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth) {
  const ParamOptions opt{.depth_index = depth};
  deconv1_ = nn::ConvTranspose2d(store, prefix + ".deconv1", dim, config.hidden, 4, 2, 1, false, opt);
  norm1_ = nn::LayerNorm(store, prefix + ".norm1", config.hidden, opt);
  deconv2_ = nn::ConvTranspose2d(store, prefix + ".deconv2", config.hidden, config.hidden, 4, 2, 1, false, opt);
  norm2_ = nn::LayerNorm(store, prefix + ".norm2", config.hidden, opt);
  out_ = nn::Conv2d(store, prefix + ".final", config.hidden, config.num_outputs, 1, 1, 0, true, opt);
}

Var PoseHead::forward(const FeatureMap& p) const {
  Var x = ops::relu(norm1_.channels(deconv1_(p.map())));
  x = ops::relu(norm2_.channels(deconv2_(x)));
  return out_(x);
}

Var PoseHead::loss(const FeatureMap& p, const Batch& batch, bool) const {
  Var heatmaps = forward(p);
  if (heatmaps.shape() != batch.heatmaps.shape())
    throw GeometryError("pose heatmaps " + shape_str(heatmaps.shape()) + " vs targets " +
                        shape_str(batch.heatmaps.shape()));
  return ops::mse_loss(heatmaps, batch.heatmaps);
}

// -- parsing ------------------------------------------------------------------

ParsingHead::ParsingHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim,
                         int depth) {
  const ParamOptions opt{.depth_index = depth};
  proj1_ = nn::Linear(store, prefix + ".conv1", dim, config.hidden, true, opt);
  norm_ = nn::LayerNorm(store, prefix + ".norm", config.hidden, opt);
  proj2_ = nn::Linear(store, prefix + ".conv2", config.hidden, config.num_outputs, true, opt);
}

Var ParsingHead::forward(const FeatureMap& p, std::int64_t full_h, std::int64_t full_w) const {
  Var x = proj2_(ops::relu(norm_(proj1_(p.tokens))));
  Var coarse = nn::tokens_to_map(x, p.grid_h, p.grid_w);
  if (full_h == p.grid_h && full_w == p.grid_w) return coarse;
  return ops::bilinear_resize(coarse, full_h, full_w, false);
}

Var ParsingHead::loss(const FeatureMap& p, const Batch& batch, bool) const {
  const auto h = batch.images.dim(2), w = batch.images.dim(3);
  Var logits = forward(p, h, w);
  const auto c = logits.dim(1);
  Var flat = ops::reshape(ops::permute(logits, {0, 2, 3, 1}), {-1, c});
  if (static_cast<std::int64_t>(batch.pixel_labels.size()) != flat.dim(0))
    throw GeometryError("parsing labels cover " + std::to_string(batch.pixel_labels.size()) + " pixels, logits " +
                        std::to_string(flat.dim(0)));
  return ops::cross_entropy(flat, batch.pixel_labels);
}

// -- attribute ----------------------------------------------------------------

AttributeHead::AttributeHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim,
                             int depth)
    : fc_(store, prefix + ".fc", dim, config.num_outputs, true, {.depth_index = depth}) {}

Var AttributeHead::logits(const FeatureMap& p) const { return fc_(p.pooled()); }

Var AttributeHead::loss(const FeatureMap& p, const Batch& batch, bool) const {
  return ops::binary_cross_entropy_with_logits(logits(p), batch.attributes);
}

// -- detection ----------------------------------------------------------------

DetectionHead::DetectionHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim,
                             int depth)
    : config_(config), dim_(dim) {
  config_.validate(dim);
  const ParamOptions opt{.depth_index = depth};
  auto rng = store.init_rng(prefix + ".anchors");
  anchors_ = &store.create(prefix + ".anchors", uniform_tensor({config.num_queries, 2}, 0.0, 1.0, rng), opt);
  pos_proj_ = nn::Linear(store, prefix + ".pos_proj", 2, dim, true, opt);
  for (std::int64_t i = 1; i <= config.decoder_layers; ++i) {
    const auto p = prefix + ".decoder." + std::to_string(i);
    DecoderLayer layer;
    layer.cross = nn::MultiHeadAttention(store, p + ".cross_attn", dim, config.decoder_heads, opt);
    layer.norm1 = nn::LayerNorm(store, p + ".norm1", dim, opt);
    layer.self = nn::MultiHeadAttention(store, p + ".self_attn", dim, config.decoder_heads, opt);
    layer.norm2 = nn::LayerNorm(store, p + ".norm2", dim, opt);
    layer.ffn = nn::Mlp(store, p + ".ffn", dim, 2 * dim, opt);
    layer.norm3 = nn::LayerNorm(store, p + ".norm3", dim, opt);
    layers_.push_back(std::move(layer));
  }
  cls_ = nn::Linear(store, prefix + ".cls", dim, config.num_outputs + 1, true, opt);
  bbox_ = nn::Linear(store, prefix + ".bbox", dim, 4, true, opt);
}

std::vector<std::string> DetectionHead::layer_kinds() const {
  std::vector<std::string> kinds{"anchor_points", "linear"};
  for (std::size_t i = 0; i < layers_.size(); ++i)
    kinds.insert(kinds.end(), {"cross_attention", "layer_norm", "self_attention", "layer_norm", "mlp", "layer_norm"});
  kinds.insert(kinds.end(), {"linear", "linear"});
  return kinds;
}

Var DetectionHead::decode(const FeatureMap& p, std::int64_t layers) const {
  const auto b = p.tokens.dim(0);
  Tensor coords({p.grid_h * p.grid_w, 2});
  for (std::int64_t r = 0; r < p.grid_h; ++r) {
    for (std::int64_t c = 0; c < p.grid_w; ++c) {
      coords[(r * p.grid_w + c) * 2] = static_cast<real>((c + 0.5) / static_cast<double>(p.grid_w));
      coords[(r * p.grid_w + c) * 2 + 1] = static_cast<real>((r + 0.5) / static_cast<double>(p.grid_h));
    }
  }
  Var key_pos = pos_proj_(Var(coords));            // [N, D]
  Var query_pos = pos_proj_(anchors_->var);        // [Q, D]
  Var keys = ops::add(p.tokens, key_pos);
  Var tgt(Tensor({b, config_.num_queries, dim_}));
  for (std::int64_t i = 0; i < layers; ++i) {
    const auto& l = layers_[static_cast<std::size_t>(i)];
    tgt = l.norm1(ops::add(tgt, l.cross(ops::add(tgt, query_pos), keys, p.tokens)));
    Var q = ops::add(tgt, query_pos);
    tgt = l.norm2(ops::add(tgt, l.self(q, q, tgt)));
    tgt = l.norm3(ops::add(tgt, l.ffn(tgt)));
  }
  return tgt;
}

DetectionOutput DetectionHead::predict(const Var& decoded) const {
  DetectionOutput out;
  out.class_logits = cls_(decoded);
  // Position c in (0, 1) as an offset from the query's anchor and extent s
  // in (0, 1): x_min = c (1 - s), x_max = x_min + s. Always a valid box.
  Var raw = bbox_(decoded);  // [B, Q, 4]
  const real lo = 1e-3f;
  Var anchor = ops::minimum(ops::maximum(anchors_->var, Var(Tensor::scalar(lo))), Var(Tensor::scalar(1.0f - lo)));
  Var anchor_logit = ops::sub(ops::log(anchor), ops::log(ops::add_scalar(ops::neg(anchor), 1.0f)));
  Var c = ops::sigmoid(ops::add(ops::narrow(raw, 2, 0, 2), anchor_logit));  // [B, Q, 2]
  Var s = ops::sigmoid(ops::narrow(raw, 2, 2, 2));
  Var lower = ops::mul(c, ops::add_scalar(ops::neg(s), 1.0f));
  Var upper = ops::add(lower, s);
  out.boxes = ops::concat({lower, upper}, 2);
  return out;
}

DetectionOutput DetectionHead::forward(const FeatureMap& p) const {
  return predict(decode(p, static_cast<std::int64_t>(layers_.size())));
}

Var DetectionHead::set_loss(const DetectionOutput& out, const Batch& batch) const {
  const auto b = out.class_logits.dim(0), q = out.class_logits.dim(1), c1 = out.class_logits.dim(2);
  if (static_cast<std::int64_t>(batch.boxes.size()) != b) throw GeometryError("detection: one box list per image");
  Var logits = ops::reshape(out.class_logits, {b * q, c1});
  const auto& lv = logits.value();
  const auto& bv = out.boxes.value();

  std::vector<int> targets(static_cast<std::size_t>(b * q), static_cast<int>(c1 - 1));
  std::vector<std::int64_t> box_index;
  std::vector<real> box_target;
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& gt = batch.boxes[static_cast<std::size_t>(i)];
    if (gt.empty()) continue;
    std::vector<std::vector<double>> prob(static_cast<std::size_t>(q), std::vector<double>(static_cast<std::size_t>(c1)));
    std::vector<Box> pred(static_cast<std::size_t>(q));
    for (std::int64_t k = 0; k < q; ++k) {
      const real* row = lv.ptr() + (i * q + k) * c1;
      const real mx = *std::max_element(row, row + c1);
      double total = 0.0;
      for (std::int64_t c = 0; c < c1; ++c) total += std::exp(static_cast<double>(row[c]) - mx);
      for (std::int64_t c = 0; c < c1; ++c)
        prob[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx) / total;
      const real* bx = bv.ptr() + (i * q + k) * 4;
      pred[static_cast<std::size_t>(k)] = {bx[0], bx[1], bx[2], bx[3]};
    }
    const auto& labels = batch.box_labels[static_cast<std::size_t>(i)];
    auto assignment = hungarian_match(prob, pred, gt, labels, config_.detection_weights);
    for (std::size_t j = 0; j < gt.size(); ++j) {
      const auto k = assignment.column_of_row[j];
      targets[static_cast<std::size_t>(i * q + k)] = labels[j];
      for (int t = 0; t < 4; ++t) box_index.push_back((i * q + k) * 4 + t);
      box_target.insert(box_target.end(), {static_cast<real>(gt[j].x_min), static_cast<real>(gt[j].y_min),
                                           static_cast<real>(gt[j].x_max), static_cast<real>(gt[j].y_max)});
    }
  }

  std::vector<real> class_weights(static_cast<std::size_t>(c1), 1.0f);
  class_weights.back() = static_cast<real>(config_.no_object_weight);
  const auto& w = config_.detection_weights;
  Var total = ops::scale(ops::cross_entropy(logits, targets, class_weights), static_cast<real>(w.cls));
  const auto matched = static_cast<std::int64_t>(box_index.size() / 4);
  if (matched > 0) {
    Var pb = ops::reshape(ops::take(out.boxes, box_index), {matched, 4});
    Tensor tb({matched, 4}, std::move(box_target));
    const real inv = 1.0f / static_cast<real>(matched);
    Var l1 = ops::scale(ops::sum(ops::abs(ops::sub(pb, Var(tb)))), inv);
    Var g = ops::scale(ops::sum(ops::add_scalar(ops::neg(giou_rows(pb, tb)), 1.0f)), inv);
    total = ops::add(total, ops::add(ops::scale(l1, static_cast<real>(w.l1)), ops::scale(g, static_cast<real>(w.iou))));
  }
  return total;
}

Var DetectionHead::loss(const FeatureMap& p, const Batch& batch, bool) const { return set_loss(forward(p), batch); }

// -- counting -----------------------------------------------------------------

CountingHead::CountingHead(const HeadConfig&, ParamStore& store, const std::string& prefix, std::int64_t dim,
                           int depth) {
  const ParamOptions opt{.depth_index = depth};
  conv1_ = nn::Conv2d(store, prefix + ".conv1", dim, 64, 3, 1, 1, true, opt);
  bn1_ = nn::BatchNorm(store, prefix + ".bn1", 64, opt);
  conv2_ = nn::Conv2d(store, prefix + ".conv2", 64, 32, 3, 1, 1, true, opt);
  bn2_ = nn::BatchNorm(store, prefix + ".bn2", 32, opt);
  conv3_ = nn::Conv2d(store, prefix + ".conv3", 32, 16, 3, 1, 1, true, opt);
  bn3_ = nn::BatchNorm(store, prefix + ".bn3", 16, opt);
  conv4_ = nn::Conv2d(store, prefix + ".conv4", 16, 1, 3, 1, 1, true, opt);
}

std::vector<std::string> CountingHead::layer_kinds() const {
  return {"upsample_x2", "conv3x3_c64", "batch_norm", "relu", "conv3x3_c32", "batch_norm", "relu",
          "upsample_x2", "conv3x3_c16", "batch_norm", "relu", "conv3x3_c1",  "relu"};
}

Var CountingHead::forward(const FeatureMap& p, bool training) const {
  const auto mode = training ? ops::BatchNormMode::Train : ops::BatchNormMode::Eval;
  Var x = ops::bilinear_resize(p.map(), 2 * p.grid_h, 2 * p.grid_w, false);
  x = ops::relu(bn1_(conv1_(x), mode));
  x = ops::relu(bn2_(conv2_(x), mode));
  x = ops::bilinear_resize(x, 4 * p.grid_h, 4 * p.grid_w, false);
  x = ops::relu(bn3_(conv3_(x), mode));
  return ops::relu(conv4_(x));
}

Var CountingHead::loss(const FeatureMap& p, const Batch& batch, bool training) const {
  Var density = forward(p, training);
  const auto& target = batch.density.shape();
  const auto& shape = density.shape();
  if (shape.size() == 4 && target.size() == 4 && shape != target && shape[0] == target[0] && shape[1] == target[1] &&
      target[2] > 0 && target[3] > 0 && shape[2] % target[2] == 0 && shape[3] % target[3] == 0 &&
      shape[2] / target[2] == shape[3] / target[3]) {
    // Sum-pool onto the target grid; per-image counts are unchanged.
    const auto f = shape[2] / target[2];
    density = ops::reshape(density, {shape[0] * shape[1], target[2], f, target[3], f});
    density = ops::reshape(ops::sum_axis(ops::sum_axis(density, 4), 2), target);
  }
  if (density.shape() != target)
    throw GeometryError("density " + shape_str(density.shape()) + " vs targets " + shape_str(target));
  return ops::mse_loss(density, batch.density);
}

std::vector<double> density_counts(const Tensor& density) {
  const auto b = density.dim(0);
  const auto per = density.numel() / std::max<std::int64_t>(b, 1);
  std::vector<double> counts(static_cast<std::size_t>(b), 0.0);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < per; ++j) counts[static_cast<std::size_t>(i)] += density[i * per + j];
  return counts;
}

}  // namespace path_engine
