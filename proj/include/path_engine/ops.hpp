#pragma once

#include <cstdint>
#include <vector>

#include "path_engine/autograd.hpp"

// Differentiable primitives. Every op records a backward closure when any
// input requires a gradient; reductions accumulate in f64.

namespace path_engine::inline PATH_ENGINE_NS::ops {

// -- elementwise, numpy-style broadcasting ----------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);

Var add_scalar(const Var& x, real c);
Var scale(const Var& x, real c);
Var neg(const Var& x);
/// a + mu * (b - a) with a single-element `mu` in [0, 1]. The forward result is
/// clamped to the elementwise [min(a,b), max(a,b)] interval so rounding never
/// leaves the convex hull; the gradient is that of the unclamped expression.
Var lerp(const Var& a, const Var& b, const Var& mu);

enum class Pointwise { Relu, Gelu, Sigmoid, Tanh, Exp, Log, Sqrt, Abs, Square };
Var pointwise(const Var& x, Pointwise kind);
inline Var relu(const Var& x) { return pointwise(x, Pointwise::Relu); }
inline Var gelu(const Var& x) { return pointwise(x, Pointwise::Gelu); }
inline Var sigmoid(const Var& x) { return pointwise(x, Pointwise::Sigmoid); }
inline Var tanh(const Var& x) { return pointwise(x, Pointwise::Tanh); }
inline Var exp(const Var& x) { return pointwise(x, Pointwise::Exp); }
inline Var log(const Var& x) { return pointwise(x, Pointwise::Log); }
inline Var sqrt(const Var& x) { return pointwise(x, Pointwise::Sqrt); }
inline Var abs(const Var& x) { return pointwise(x, Pointwise::Abs); }
inline Var square(const Var& x) { return pointwise(x, Pointwise::Square); }

// -- reductions ---------------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);
Var sum_axis(const Var& x, int axis, bool keepdim = false);
Var mean_axis(const Var& x, int axis, bool keepdim = false);

// -- shape --------------------------------------------------------------------
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<int>& order);
Var narrow(const Var& x, int axis, std::int64_t start, std::int64_t length);
Var concat(const std::vector<Var>& parts, int axis);
/// Rows `index[i]` of `x` along axis 0.
Var index_select(const Var& x, const std::vector<std::int64_t>& index);
/// Elements at flat positions; result is 1-D.
Var take(const Var& x, const std::vector<std::int64_t>& flat_index);

// -- linear algebra -----------------------------------------------------------
/// a: [..., M, K]; b: [K, N] shared across the batch, or [..., K, N] with the
/// same leading extents as `a`. With transpose_b the trailing two extents of
/// b are read as [N, K].
Var matmul(const Var& a, const Var& b, bool transpose_b = false);
/// x: [..., in] times w: [in, out] plus optional bias [out].
Var linear(const Var& x, const Var& w, const Var& bias);

// -- convolution and resampling (NCHW) ----------------------------------------
/// w: [C_out, C_in, kh, kw]; bias optional [C_out].
Var conv2d(const Var& x, const Var& w, const Var& bias, std::int64_t stride, std::int64_t pad);
/// Exact adjoint of conv2d with the same weight layout read as
/// [C_in, C_out, kh, kw]; output extent (H-1)*stride - 2*pad + kh.
Var conv_transpose2d(const Var& x, const Var& w, const Var& bias, std::int64_t stride, std::int64_t pad);
Var bilinear_resize(const Var& x, std::int64_t out_h, std::int64_t out_w, bool align_corners);

// -- normalization ------------------------------------------------------------
Var softmax(const Var& x, int axis);
Var log_softmax(const Var& x, int axis);
/// Normalizes over the last axis; gamma and beta have that axis' extent.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps = 1e-5f);
/// Layer norm over the channel axis of an NCHW map.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, real eps = 1e-5f);

enum class BatchNormMode { Train, Eval };
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  real momentum = 0.1f;
  real eps = 1e-5f;
  explicit BatchNormState(std::int64_t channels = 0)
      : running_mean({channels}, 0.0f), running_var({channels}, 1.0f) {}
};
/// Channel axis 1; statistics over every other axis. Train mode updates the
/// running statistics (unbiased variance) with `state.momentum`.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, BatchNormMode mode);

// -- losses (scalar results) --------------------------------------------------
/// logits [M, C]; labels in [0, C) or -1 to ignore; optional per-class weights
/// give the weighted mean used by set-prediction classifiers.
Var cross_entropy(const Var& logits, const std::vector<int>& labels, const std::vector<real>& class_weights = {});
Var binary_cross_entropy_with_logits(const Var& logits, const Tensor& targets);
Var mse_loss(const Var& prediction, const Tensor& target);

}  // namespace path_engine::ops
