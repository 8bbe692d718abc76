#pragma once

#include <string>
#include <vector>

#include "path_engine/nn.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

struct BackboneConfig {
  std::int64_t patch_size = 4;
  std::int64_t embed_dim = 32;
  std::int64_t depth = 4;
  std::int64_t heads = 4;
  std::int64_t mlp_ratio = 4;
  std::int64_t canonical_image = 32;
  std::int64_t in_channels = 3;
  /// 1-based block indices whose outputs are tapped; empty selects the last
  /// min(8, depth) blocks.
  std::vector<std::int64_t> tap_layers;

  void validate() const;
  std::vector<std::int64_t> resolved_taps() const;
  std::int64_t canonical_grid() const { return canonical_image / patch_size; }
  bool operator==(const BackboneConfig&) const = default;
};

/// Token sequence [B, N, D] laid out row-major on a grid_h x grid_w grid.
struct FeatureMap {
  Var tokens;
  std::int64_t grid_h = 0;
  std::int64_t grid_w = 0;

  Var map() const { return nn::tokens_to_map(tokens, grid_h, grid_w); }
  /// Spatial mean, [B, D].
  Var pooled() const { return ops::mean_axis(tokens, 1); }
};

struct BackboneFeatures {
  FeatureMap final;
  /// One entry per tapped block, in increasing block order.
  std::vector<FeatureMap> taps;
};

/// Plain pre-norm ViT without a class token. Every parameter is named
/// "backbone.*". Positional embeddings are stored once at the canonical grid
/// and bilinearly resized (align_corners) to the token grid of each input.
class VitBackbone {
 public:
  static constexpr const char* kSharedPosEmbed = "backbone.pos_embed";

  VitBackbone() = default;
  /// `pos_embed_names` lists the embedding parameters to create; one shared
  /// name normally, one per task in the non-shared ablation.
  VitBackbone(const BackboneConfig& config, ParamStore& store,
              const std::vector<std::string>& pos_embed_names = {kSharedPosEmbed});

  bool initialized() const { return store_ != nullptr; }
  const BackboneConfig& config() const { return config_; }

  FeatureMap patch_embed(const Var& image) const;
  /// [1, (h/P)*(w/P), D] embedding for an input of h x w pixels.
  Var positional_embedding_for(std::int64_t input_h, std::int64_t input_w,
                               const std::string& pos_embed_name = kSharedPosEmbed) const;
  /// Block `index` in 1..depth.
  Var transformer_block(std::int64_t index, const Var& tokens) const;
  BackboneFeatures forward_features(const Var& image, const std::string& pos_embed_name = kSharedPosEmbed) const;

  /// Name prefix of block `index`, e.g. "backbone.blocks.3.".
  static std::string block_prefix(std::int64_t index);

 private:
  struct Block {
    nn::LayerNorm norm1, norm2;
    nn::MultiHeadAttention attn;
    nn::Mlp mlp;
  };

  BackboneConfig config_;
  ParamStore* store_ = nullptr;
  nn::Conv2d stem_;
  std::vector<Block> blocks_;
};

}  // namespace path_engine
