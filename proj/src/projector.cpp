#include "path_engine/projector.hpp"

#include <cmath>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::string to_string(ShareType type) {
  switch (type) {
    case ShareType::All: return "A";
    case ShareType::Dataset: return "S";
    case ShareType::Task: return "T";
  }
  return "?";
}

ShareType parse_share_type(const std::string& text) {
  if (text == "A") return ShareType::All;
  if (text == "S") return ShareType::Dataset;
  if (text == "T") return ShareType::Task;
  throw ConfigError("share type must be one of A, S, T (got '" + text + "')");
}

void ProjectorConfig::validate(std::int64_t embed_dim) const {
  if (!(temperature > 0.0)) throw ConfigError("projector temperature must be positive");
  if (attention_heads < 1 || embed_dim % attention_heads != 0)
    throw ConfigError("projector attention_heads must divide embed_dim");
  if (se_kernel < 1 || se_kernel % 2 == 0) throw ConfigError("projector se_kernel must be odd");
}

Var gate_value(const Var& alpha, double temperature) {
  return ops::sigmoid(ops::div(alpha, Var(Tensor::scalar(static_cast<real>(temperature)))));
}

Var gate_fuse(const std::vector<Var>& z, const std::vector<Var>& mu) {
  if (z.empty()) throw DimensionError("gate_fuse needs at least one input");
  if (mu.size() + 1 != z.size())
    throw DimensionError("gate_fuse expects " + std::to_string(z.size() - 1) + " gates, got " +
                         std::to_string(mu.size()));
  Var p = z[0];
  for (std::size_t l = 1; l < z.size(); ++l) {
    if (z[l].shape() != z[0].shape())
      throw DimensionError("gate_fuse input " + std::to_string(l + 1) + " has shape " + shape_str(z[l].shape()) +
                           ", expected " + shape_str(z[0].shape()));
    p = ops::lerp(p, z[l], mu[l - 1]);
  }
  return p;
}

std::string TaskProjector::prefix(const std::string& group, std::int64_t layer) {
  return "projector." + group + "." + std::to_string(layer) + ".";
}

TaskProjector::TaskProjector(const ProjectorConfig& config, ParamStore& store, const std::string& group,
                             std::int64_t embed_dim, std::int64_t num_taps, int depth_index)
    : config_(config), group_(group) {
  config_.validate(embed_dim);
  if (num_taps < 1) throw ConfigError("projector needs at least one tap");
  const ParamOptions opt{.depth_index = depth_index};
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.se_kernel));
  for (std::int64_t l = 1; l <= num_taps; ++l) {
    const auto p = prefix(group, l);
    Layer layer;
    auto rng = store.init_rng(p + "se.weight");
    layer.se_weight = &store.create(p + "se.weight", uniform_tensor({config_.se_kernel}, -bound, bound, rng), opt);
    layer.se_bias = &store.create(p + "se.bias", Tensor({1}), opt);
    layer.norm = nn::LayerNorm(store, p + "norm", embed_dim, opt);
    layer.attn = nn::MultiHeadAttention(store, p + "attn", embed_dim, config_.attention_heads, opt);
    if (l >= 2) layer.alpha = &store.create(p + "gate", Tensor({1}), {.depth_index = depth_index, .weight_decay = false});
    layers_.push_back(std::move(layer));
  }
}

const TaskProjector::Layer& TaskProjector::at(std::int64_t layer) const {
  if (layer < 1 || layer > num_taps())
    throw ConfigError("projector layer " + std::to_string(layer) + " outside 1.." + std::to_string(num_taps()));
  return layers_[static_cast<std::size_t>(layer - 1)];
}

Var TaskProjector::channel_attention(std::int64_t layer, const Var& tokens) const {
  const auto& l = at(layer);
  const auto c = tokens.dim(2);
  const auto k = config_.se_kernel;
  const auto half = k / 2;
  Var squeeze = ops::mean_axis(tokens, 1);  // [B, C]
  Var padded = squeeze;
  if (half > 0) {
    Var zeros(Tensor({tokens.dim(0), half}));
    padded = ops::concat({zeros, squeeze, zeros}, 1);
  }
  Var conv = ops::mul(ops::narrow(padded, 1, 0, c), ops::narrow(l.se_weight->var, 0, 0, 1));
  for (std::int64_t j = 1; j < k; ++j)
    conv = ops::add(conv, ops::mul(ops::narrow(padded, 1, j, c), ops::narrow(l.se_weight->var, 0, j, 1)));
  return ops::sigmoid(ops::add(conv, l.se_bias->var));
}

Var TaskProjector::se_block(std::int64_t layer, const Var& tokens) const {
  Var attention = channel_attention(layer, tokens);
  return ops::mul(tokens, ops::reshape(attention, {tokens.dim(0), 1, tokens.dim(2)}));
}

Var TaskProjector::project_layer(std::int64_t layer, const Var& tokens) const {
  const auto& l = at(layer);
  Var e = se_block(layer, tokens);
  return ops::add(e, l.attn(l.norm(e)));
}

Var TaskProjector::gate(std::int64_t layer) const {
  const auto& l = at(layer);
  if (!l.alpha) throw ConfigError("the first projector layer has no gate");
  return gate_value(l.alpha->var, config_.temperature);
}

FeatureMap TaskProjector::forward(const std::vector<FeatureMap>& taps) const {
  if (static_cast<std::int64_t>(taps.size()) != num_taps())
    throw ConfigError("projector '" + group_ + "' expects " + std::to_string(num_taps()) + " taps, got " +
                      std::to_string(taps.size()));
  std::vector<Var> z, mu;
  for (std::int64_t l = 1; l <= num_taps(); ++l) {
    z.push_back(project_layer(l, taps[static_cast<std::size_t>(l - 1)].tokens));
    if (l >= 2) mu.push_back(gate(l));
  }
  return {gate_fuse(z, mu), taps.front().grid_h, taps.front().grid_w};
}

}  // namespace path_engine
