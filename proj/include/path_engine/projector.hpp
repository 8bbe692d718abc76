#pragma once

#include <string>
#include <vector>

#include "path_engine/backbone.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

/// How projector parameters are shared: one set for all datasets (A), one per
/// dataset (S), or one per task (T).
enum class ShareType { All, Dataset, Task };

std::string to_string(ShareType type);
ShareType parse_share_type(const std::string& text);

struct ProjectorConfig {
  ShareType share_type = ShareType::Task;
  double temperature = 0.1;
  std::int64_t attention_heads = 1;
  std::int64_t se_kernel = 3;

  void validate(std::int64_t embed_dim) const;
  bool operator==(const ProjectorConfig&) const = default;
};

/// mu = sigmoid(alpha / T).
Var gate_value(const Var& alpha, double temperature);

/// p_1 = z_1, p_l = mu_l z_l + (1 - mu_l) p_{l-1}; `mu` holds mu_2..mu_L.
Var gate_fuse(const std::vector<Var>& z, const std::vector<Var>& mu);

/// Chain of channel attention, self-attention and gated fusion over the
/// backbone taps. Parameters are named "projector.<group>.<layer>.*" with
/// layer counting taps from 1.
class TaskProjector {
 public:
  TaskProjector() = default;
  TaskProjector(const ProjectorConfig& config, ParamStore& store, const std::string& group, std::int64_t embed_dim,
                std::int64_t num_taps, int depth_index);

  const std::string& group() const { return group_; }
  std::int64_t num_taps() const { return static_cast<std::int64_t>(layers_.size()); }

  /// e = sigmoid(conv1d_channels(spatial mean of f)) * f.
  Var se_block(std::int64_t layer, const Var& tokens) const;
  /// Channel attention of the SE block, [B, C].
  Var channel_attention(std::int64_t layer, const Var& tokens) const;
  /// z = e + SelfAttention(LayerNorm(e)) with e = se_block(f).
  Var project_layer(std::int64_t layer, const Var& tokens) const;
  /// Gate of tap `layer` in 2..L.
  Var gate(std::int64_t layer) const;
  FeatureMap forward(const std::vector<FeatureMap>& taps) const;

  static std::string prefix(const std::string& group, std::int64_t layer);

 private:
  struct Layer {
    Parameter* se_weight = nullptr;
    Parameter* se_bias = nullptr;
    nn::LayerNorm norm;
    nn::MultiHeadAttention attn;
    Parameter* alpha = nullptr;
  };

  const Layer& at(std::int64_t layer) const;

  ProjectorConfig config_;
  std::string group_;
  std::vector<Layer> layers_;
};

}  // namespace path_engine
