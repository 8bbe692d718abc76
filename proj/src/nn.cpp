#include "path_engine/nn.hpp"

#include <cmath>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS::nn {

Tensor xavier_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor(std::move(shape), -a, a, rng);
}

Linear::Linear(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, bool with_bias,
               ParamOptions options) {
  auto rng = store.init_rng(prefix + ".weight");
  weight = &store.create(prefix + ".weight", xavier_uniform({in, out}, in, out, rng), options);
  if (with_bias) bias = &store.create(prefix + ".bias", Tensor({out}, 0.0f), options);
}

Var Linear::operator()(const Var& x) const {
  if (!weight) throw StateError("linear layer used before initialization");
  return ops::linear(x, weight->var, bias ? bias->var : Var{});
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, std::int64_t dim, ParamOptions options) {
  gamma = &store.create(prefix + ".weight", Tensor({dim}, 1.0f), options);
  beta = &store.create(prefix + ".bias", Tensor({dim}, 0.0f), options);
}

Var LayerNorm::operator()(const Var& x) const { return ops::layer_norm(x, gamma->var, beta->var); }
Var LayerNorm::channels(const Var& x) const { return ops::layer_norm_channels(x, gamma->var, beta->var); }

BatchNorm::BatchNorm(ParamStore& store, const std::string& prefix, std::int64_t channels, ParamOptions options) {
  gamma = &store.create(prefix + ".weight", Tensor({channels}, 1.0f), options);
  beta = &store.create(prefix + ".bias", Tensor({channels}, 0.0f), options);
  state = &store.batch_norm_state(prefix, channels);
}

Var BatchNorm::operator()(const Var& x, ops::BatchNormMode mode) const {
  return ops::batch_norm(x, gamma->var, beta->var, *state, mode);
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, std::int64_t kernel,
               std::int64_t stride_, std::int64_t pad_, bool with_bias, ParamOptions options)
    : stride(stride_), pad(pad_) {
  auto rng = store.init_rng(prefix + ".weight");
  const std::int64_t kk = kernel * kernel;
  weight = &store.create(prefix + ".weight", xavier_uniform({out, in, kernel, kernel}, in * kk, out * kk, rng), options);
  if (with_bias) bias = &store.create(prefix + ".bias", Tensor({out}, 0.0f), options);
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, weight->var, bias ? bias->var : Var{}, stride, pad);
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out,
                                 std::int64_t kernel, std::int64_t stride_, std::int64_t pad_, bool with_bias,
                                 ParamOptions options)
    : stride(stride_), pad(pad_) {
  auto rng = store.init_rng(prefix + ".weight");
  const std::int64_t kk = kernel * kernel;
  weight = &store.create(prefix + ".weight", xavier_uniform({in, out, kernel, kernel}, in * kk, out * kk, rng), options);
  if (with_bias) bias = &store.create(prefix + ".bias", Tensor({out}, 0.0f), options);
}

Var ConvTranspose2d::operator()(const Var& x) const {
  return ops::conv_transpose2d(x, weight->var, bias ? bias->var : Var{}, stride, pad);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& prefix, std::int64_t dim_,
                                       std::int64_t heads_, ParamOptions options)
    : dim(dim_), heads(heads_) {
  if (heads <= 0 || dim % heads != 0)
    throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
  q = Linear(store, prefix + ".q", dim, dim, true, options);
  k = Linear(store, prefix + ".k", dim, dim, true, options);
  v = Linear(store, prefix + ".v", dim, dim, true, options);
  out = Linear(store, prefix + ".out", dim, dim, true, options);
}

Var MultiHeadAttention::operator()(const Var& query, const Var& key, const Var& value) const {
  const std::int64_t b = query.dim(0), nq = query.dim(1), nk = key.dim(1), dh = dim / heads;
  auto split = [&](const Var& x, std::int64_t n) {
    if (heads == 1) return x;
    return ops::reshape(ops::permute(ops::reshape(x, {b, n, heads, dh}), {0, 2, 1, 3}), {b * heads, n, dh});
  };
  Var qh = split(q(query), nq);
  Var kh = split(k(key), nk);
  Var vh = split(v(value), nk);
  Var scores = ops::scale(ops::matmul(qh, kh, true), static_cast<real>(1.0 / std::sqrt(static_cast<double>(dh))));
  Var attn = ops::softmax(scores, -1);
  last_attention_ = attn.value();
  Var ctx = ops::matmul(attn, vh);
  if (heads > 1) ctx = ops::reshape(ops::permute(ops::reshape(ctx, {b, heads, nq, dh}), {0, 2, 1, 3}), {b, nq, dim});
  return out(ctx);
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, std::int64_t dim, std::int64_t hidden, ParamOptions options) {
  fc1 = Linear(store, prefix + ".fc1", dim, hidden, true, options);
  fc2 = Linear(store, prefix + ".fc2", hidden, dim, true, options);
}

Var Mlp::operator()(const Var& x) const { return fc2(ops::gelu(fc1(x))); }

Var tokens_to_map(const Var& tokens, std::int64_t grid_h, std::int64_t grid_w) {
  const std::int64_t b = tokens.dim(0), d = tokens.dim(2);
  if (tokens.dim(1) != grid_h * grid_w) throw DimensionError("token count does not match grid");
  return ops::permute(ops::reshape(tokens, {b, grid_h, grid_w, d}), {0, 3, 1, 2});
}

Var map_to_tokens(const Var& map) {
  const std::int64_t b = map.dim(0), c = map.dim(1), h = map.dim(2), w = map.dim(3);
  return ops::reshape(ops::permute(map, {0, 2, 3, 1}), {b, h * w, c});
}

}  // namespace path_engine::nn
