#pragma once

#include <string>

#include "path_engine/param_store.hpp"

// Small layer wrappers. Each holds pointers into a ParamStore; the store owns
// the values and must outlive the layer.

namespace path_engine::inline PATH_ENGINE_NS::nn {

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, bool bias,
         ParamOptions options);
  Var operator()(const Var& x) const;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& prefix, std::int64_t dim, ParamOptions options);
  /// Over the last axis.
  Var operator()(const Var& x) const;
  /// Over the channel axis of an NCHW map.
  Var channels(const Var& x) const;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, const std::string& prefix, std::int64_t channels, ParamOptions options);
  Var operator()(const Var& x, ops::BatchNormMode mode) const;
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  ops::BatchNormState* state = nullptr;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out, std::int64_t kernel,
         std::int64_t stride, std::int64_t pad, bool bias, ParamOptions options);
  Var operator()(const Var& x) const;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  std::int64_t stride = 1, pad = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& store, const std::string& prefix, std::int64_t in, std::int64_t out,
                  std::int64_t kernel, std::int64_t stride, std::int64_t pad, bool bias, ParamOptions options);
  Var operator()(const Var& x) const;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  std::int64_t stride = 2, pad = 1;
};

/// Scaled dot-product attention with separate q/k/v/out projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& prefix, std::int64_t dim, std::int64_t heads,
                     ParamOptions options);
  /// query [B, Nq, D]; key and value [B, Nk, D].
  Var operator()(const Var& query, const Var& key, const Var& value) const;
  Var operator()(const Var& x) const { return (*this)(x, x, x); }
  /// Softmax weights of the last call, [B*heads, Nq, Nk].
  const Tensor& last_attention() const { return last_attention_; }

  std::int64_t dim = 0, heads = 1;
  Linear q, k, v, out;

 private:
  mutable Tensor last_attention_;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, std::int64_t dim, std::int64_t hidden, ParamOptions options);
  Var operator()(const Var& x) const;
  Linear fc1, fc2;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng);

/// [B, N, D] tokens on an h x w grid to an NCHW map [B, D, h, w].
Var tokens_to_map(const Var& tokens, std::int64_t grid_h, std::int64_t grid_w);
/// NCHW map to row-major tokens [B, h*w, C].
Var map_to_tokens(const Var& map);

}  // namespace path_engine::nn
