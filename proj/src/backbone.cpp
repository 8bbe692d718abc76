#include "path_engine/backbone.hpp"

#include <algorithm>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

void BackboneConfig::validate() const {
  if (patch_size < 1 || embed_dim < 1 || depth < 1 || heads < 1 || mlp_ratio < 1 || in_channels < 1)
    throw ConfigError("backbone extents must be positive");
  if (embed_dim % heads != 0)
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " + std::to_string(heads));
  if (canonical_image % patch_size != 0)
    throw ConfigError("canonical_image " + std::to_string(canonical_image) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  std::int64_t prev = 0;
  for (auto t : tap_layers) {
    if (t <= prev || t > depth) throw ConfigError("tap_layers must be strictly increasing within 1..depth");
    prev = t;
  }
}

std::vector<std::int64_t> BackboneConfig::resolved_taps() const {
  if (!tap_layers.empty()) return tap_layers;
  std::vector<std::int64_t> taps;
  for (std::int64_t i = depth - std::min<std::int64_t>(8, depth) + 1; i <= depth; ++i) taps.push_back(i);
  return taps;
}

std::string VitBackbone::block_prefix(std::int64_t index) { return "backbone.blocks." + std::to_string(index) + "."; }

VitBackbone::VitBackbone(const BackboneConfig& config, ParamStore& store,
                         const std::vector<std::string>& pos_embed_names)
    : config_(config), store_(&store) {
  config_.validate();
  const auto d = config_.embed_dim;
  const auto g = config_.canonical_grid();
  stem_ = nn::Conv2d(store, "backbone.patch_embed", config_.in_channels, d, config_.patch_size, config_.patch_size, 0,
                     true, {.depth_index = 0});
  for (const auto& name : pos_embed_names) {
    auto rng = store.init_rng(name);
    store.create(name, trunc_normal_tensor({1, d, g, g}, 0.02, rng), {.depth_index = 0});
  }
  for (std::int64_t i = 1; i <= config_.depth; ++i) {
    const auto prefix = block_prefix(i);
    const ParamOptions opt{.depth_index = static_cast<int>(i)};
    Block b;
    b.norm1 = nn::LayerNorm(store, prefix + "norm1", d, opt);
    b.attn = nn::MultiHeadAttention(store, prefix + "attn", d, config_.heads, opt);
    b.norm2 = nn::LayerNorm(store, prefix + "norm2", d, opt);
    b.mlp = nn::Mlp(store, prefix + "mlp", d, d * config_.mlp_ratio, opt);
    blocks_.push_back(std::move(b));
  }
}

FeatureMap VitBackbone::patch_embed(const Var& image) const {
  if (!initialized()) throw StateError("backbone used before initialization");
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != config_.in_channels)
    throw GeometryError("backbone expects [B, " + std::to_string(config_.in_channels) + ", H, W], got " + shape_str(s));
  const auto p = config_.patch_size;
  if (s[2] % p != 0 || s[3] % p != 0)
    throw GeometryError("image " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                        " not divisible by patch size " + std::to_string(p));
  Var grid = stem_(image);
  return {nn::map_to_tokens(grid), s[2] / p, s[3] / p};
}

Var VitBackbone::positional_embedding_for(std::int64_t input_h, std::int64_t input_w,
                                          const std::string& pos_embed_name) const {
  if (!initialized()) throw StateError("backbone used before initialization");
  const auto& pe = store_->get(pos_embed_name).var;
  const auto gh = input_h / config_.patch_size, gw = input_w / config_.patch_size;
  const auto g = config_.canonical_grid();
  Var grid = (gh == g && gw == g) ? pe : ops::bilinear_resize(pe, gh, gw, true);
  return nn::map_to_tokens(grid);
}

Var VitBackbone::transformer_block(std::int64_t index, const Var& tokens) const {
  if (!initialized()) throw StateError("backbone used before initialization");
  if (index < 1 || index > config_.depth) throw ConfigError("block index out of range");
  const auto& b = blocks_[static_cast<std::size_t>(index - 1)];
  Var x = ops::add(tokens, b.attn(b.norm1(tokens)));
  return ops::add(x, b.mlp(b.norm2(x)));
}

BackboneFeatures VitBackbone::forward_features(const Var& image, const std::string& pos_embed_name) const {
  if (!initialized()) throw StateError("backbone used before initialization");
  FeatureMap embedded = patch_embed(image);
  Var x = ops::add(embedded.tokens, positional_embedding_for(image.dim(2), image.dim(3), pos_embed_name));
  const auto taps = config_.resolved_taps();
  BackboneFeatures out;
  std::size_t next_tap = 0;
  for (std::int64_t i = 1; i <= config_.depth; ++i) {
    x = transformer_block(i, x);
    if (next_tap < taps.size() && taps[next_tap] == i) {
      out.taps.push_back({x, embedded.grid_h, embedded.grid_w});
      ++next_tap;
    }
  }
  out.final = {x, embedded.grid_h, embedded.grid_w};
  return out;
}

}  // namespace path_engine
