#pragma once

#include <memory>
#include <string>
#include <vector>

#include "path_engine/backbone.hpp"
#include "path_engine/matching.hpp"
#include "path_engine/task.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

struct HeadConfig {
  TaskFamily family = TaskFamily::ReID;
  /// Identities (reid), keypoints (pose), classes (parsing, detection) or attributes.
  std::int64_t num_outputs = 1;
  /// Width of the pose deconvolution blocks and the parsing hidden layer.
  std::int64_t hidden = 32;
  std::int64_t num_queries = 8;
  std::int64_t decoder_layers = 2;
  std::int64_t decoder_heads = 2;
  double triplet_margin = 0.3;
  MatchWeights detection_weights;
  double no_object_weight = 0.1;

  void validate(std::int64_t embed_dim) const;
  bool operator==(const HeadConfig&) const = default;
};

class Head {
 public:
  virtual ~Head() = default;
  virtual TaskFamily family() const = 0;
  /// Scalar training objective of one batch.
  virtual Var loss(const FeatureMap& p, const Batch& batch, bool training) const = 0;
  /// Ordered layer kinds, e.g. {"deconv", "layer_norm", "relu", ...}.
  virtual std::vector<std::string> layer_kinds() const = 0;
};

/// Heads are named "head.<task>.<dataset>.*"; `prefix` is that stem.
std::unique_ptr<Head> make_head(const HeadConfig& config, ParamStore& store, const std::string& prefix,
                                std::int64_t embed_dim, int depth_index);

/// max(d_p - d_n + margin, 0).
double triplet_loss(double d_p, double d_n, double margin);
/// Batch-hard triplet loss over Euclidean distances: for every anchor with at
/// least one positive and one negative, the farthest positive and the nearest
/// negative, averaged over such anchors.
Var batch_hard_triplet(const Var& embeddings, const std::vector<int>& ids, double margin);

Var aggregate_loss(const std::vector<Var>& losses, const std::vector<double>& weights);

class ReidHead : public Head {
 public:
  ReidHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::ReID; }
  /// Z = BatchNorm(mean-pooled p), [B, D].
  Var embed(const FeatureMap& p, bool training) const;
  Var logits(const Var& z) const { return classifier_(z); }
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  std::vector<std::string> layer_kinds() const override { return {"mean_pool", "batch_norm", "linear"}; }

 private:
  HeadConfig config_;
  nn::BatchNorm bn_;
  nn::Linear classifier_;
};

class PoseHead : public Head {
 public:
  PoseHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::Pose; }
  /// Heatmaps [B, K, 4h, 4w].
  Var forward(const FeatureMap& p) const;
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  std::vector<std::string> layer_kinds() const override {
    return {"deconv", "layer_norm", "relu", "deconv", "layer_norm", "relu", "conv1x1"};
  }

 private:
  nn::ConvTranspose2d deconv1_, deconv2_;
  nn::LayerNorm norm1_, norm2_;
  nn::Conv2d out_;
};

class ParsingHead : public Head {
 public:
  ParsingHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::Parsing; }
  /// Per-pixel class logits [B, C, full_h, full_w].
  Var forward(const FeatureMap& p, std::int64_t full_h, std::int64_t full_w) const;
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  std::vector<std::string> layer_kinds() const override {
    return {"conv1x1", "layer_norm", "relu", "conv1x1", "bilinear_upsample"};
  }

 private:
  nn::Linear proj1_, proj2_;
  nn::LayerNorm norm_;
};

class AttributeHead : public Head {
 public:
  AttributeHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::Attribute; }
  Var logits(const FeatureMap& p) const;
  Var probabilities(const FeatureMap& p) const { return ops::sigmoid(logits(p)); }
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  std::vector<std::string> layer_kinds() const override { return {"mean_pool", "linear", "sigmoid"}; }
  const nn::Linear& fc() const { return fc_; }

 private:
  nn::Linear fc_;
};

struct DetectionOutput {
  Var class_logits;  // [B, Q, C + 1]; the last class is "no object"
  Var boxes;         // [B, Q, 4]
};

class DetectionHead : public Head {
 public:
  DetectionHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::Detection; }
  DetectionOutput forward(const FeatureMap& p) const;
  /// Decoder layers [0, layers) only, for inspection.
  Var decode(const FeatureMap& p, std::int64_t layers) const;
  DetectionOutput predict(const Var& decoded) const;
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  Var set_loss(const DetectionOutput& out, const Batch& batch) const;
  std::vector<std::string> layer_kinds() const override;

 private:
  struct DecoderLayer {
    nn::MultiHeadAttention cross, self;
    nn::LayerNorm norm1, norm2, norm3;
    nn::Mlp ffn;
  };

  HeadConfig config_;
  std::int64_t dim_ = 0;
  Parameter* anchors_ = nullptr;
  nn::Linear pos_proj_;
  std::vector<DecoderLayer> layers_;
  nn::Linear cls_, bbox_;
};

class CountingHead : public Head {
 public:
  CountingHead(const HeadConfig& config, ParamStore& store, const std::string& prefix, std::int64_t dim, int depth);
  TaskFamily family() const override { return TaskFamily::Counting; }
  /// Non-negative density [B, 1, 4h, 4w].
  Var forward(const FeatureMap& p, bool training) const;
  /// MSE against the ground-truth density; a target grid coarser by an
  /// integer factor is compared against the sum-pooled prediction.
  Var loss(const FeatureMap& p, const Batch& batch, bool training) const override;
  std::vector<std::string> layer_kinds() const override;

 private:
  nn::Conv2d conv1_, conv2_, conv3_, conv4_;
  nn::BatchNorm bn1_, bn2_, bn3_;
};

/// Sum over each density map, one value per image.
std::vector<double> density_counts(const Tensor& density);

}  // namespace path_engine
