#include <memory>

#include "grad_cases.hpp"
#include "path_engine/nn.hpp"
#include "path_engine/ops.hpp"
#include "path_engine/random.hpp"

namespace path_engine::inline PATH_ENGINE_NS::verify {
namespace {

class Maker {
 public:
  explicit Maker(std::uint64_t seed) : rng_(seed) {}

  Var uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    return Var(uniform_tensor(std::move(shape), lo, hi, rng_), true);
  }
  /// Magnitudes in [0.2, 1] with random sign: keeps kinks at 0 out of reach of
  /// the finite-difference step.
  Var away_from_zero(Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<real>(rng_.uniform(0.2, 1.0) * (rng_.bernoulli(0.5) ? 1 : -1));
    return Var(std::move(t), true);
  }
  Tensor weights(const Shape& shape) { return uniform_tensor(shape, -1.0, 1.0, rng_); }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
};

// Scalar objective <out, W> with W fixed.
Var contract(const Var& out, const Tensor& w) { return ops::sum(ops::mul(out, Var(w))); }

GradCase unary(Maker& mk, std::string name, Var x, std::function<Var(const Var&)> op, const Shape& out_shape) {
  auto w = mk.weights(out_shape);
  return {std::move(name), [=] { return contract(op(x), w); }, {{"x", x}}, {}};
}

GradCase binary(Maker& mk, std::string name, Var a, Var b, std::function<Var(const Var&, const Var&)> op,
                const Shape& out_shape) {
  auto w = mk.weights(out_shape);
  return {std::move(name), [=] { return contract(op(a, b), w); }, {{"a", a}, {"b", b}}, {}};
}

}  // namespace

std::vector<GradCase> primitive_grad_cases(std::uint64_t seed) {
  Maker mk(seed);
  std::vector<GradCase> cases;

  cases.push_back(binary(mk, "add_broadcast", mk.uniform({3, 4, 5}), mk.uniform({4, 1}), ops::add, {3, 4, 5}));
  cases.push_back(binary(mk, "sub_broadcast", mk.uniform({3, 1, 5}), mk.uniform({3, 4, 5}), ops::sub, {3, 4, 5}));
  cases.push_back(binary(mk, "mul_broadcast", mk.uniform({2, 6}), mk.uniform({6}), ops::mul, {2, 6}));
  cases.push_back(binary(mk, "mul_scalar", mk.uniform({4, 3}), mk.uniform({1}), ops::mul, {4, 3}));
  cases.push_back(binary(mk, "div", mk.uniform({3, 5}), mk.uniform({3, 5}, 0.5, 2.0), ops::div, {3, 5}));
  {
    Var a = mk.uniform({4, 4});
    Tensor bt = a.value();
    for (auto& v : bt.data()) v += static_cast<real>(mk.rng().uniform(0.2, 1.0) * (mk.rng().bernoulli(0.5) ? 1 : -1));
    Var b(bt, true);
    cases.push_back(binary(mk, "maximum", a, b, ops::maximum, {4, 4}));
    cases.push_back(binary(mk, "minimum", a, b, ops::minimum, {4, 4}));
  }
  cases.push_back(unary(mk, "add_scalar", mk.uniform({5}), [](const Var& x) { return ops::add_scalar(x, 1.5f); }, {5}));
  cases.push_back(unary(mk, "scale", mk.uniform({5}), [](const Var& x) { return ops::scale(x, -2.5f); }, {5}));
  cases.push_back(unary(mk, "neg", mk.uniform({5}), ops::neg, {5}));
  {
    Var a = mk.uniform({3, 4}), b = mk.uniform({3, 4}), mu = mk.uniform({1}, 0.2, 0.8);
    auto w = mk.weights({3, 4});
    cases.push_back({"lerp", [=] { return contract(ops::lerp(a, b, mu), w); }, {{"a", a}, {"b", b}, {"mu", mu}}, {}});
  }

  cases.push_back(unary(mk, "relu", mk.away_from_zero({4, 5}), ops::relu, {4, 5}));
  cases.push_back(unary(mk, "gelu", mk.uniform({4, 5}, -3, 3), ops::gelu, {4, 5}));
  cases.push_back(unary(mk, "sigmoid", mk.uniform({4, 5}, -4, 4), ops::sigmoid, {4, 5}));
  cases.push_back(unary(mk, "tanh", mk.uniform({4, 5}, -2, 2), ops::tanh, {4, 5}));
  cases.push_back(unary(mk, "exp", mk.uniform({4, 5}), ops::exp, {4, 5}));
  cases.push_back(unary(mk, "log", mk.uniform({4, 5}, 0.5, 3), ops::log, {4, 5}));
  cases.push_back(unary(mk, "sqrt", mk.uniform({4, 5}, 0.5, 3), ops::sqrt, {4, 5}));
  cases.push_back(unary(mk, "abs", mk.away_from_zero({4, 5}), ops::abs, {4, 5}));
  cases.push_back(unary(mk, "square", mk.uniform({4, 5}), ops::square, {4, 5}));

  {
    Var x = mk.uniform({3, 4});
    cases.push_back({"sum", [=] { return ops::square(ops::sum(x)); }, {{"x", x}}, {}});
    cases.push_back({"mean", [=] { return ops::square(ops::mean(x)); }, {{"x", x}}, {}});
  }
  cases.push_back(unary(mk, "sum_axis", mk.uniform({3, 4, 5}), [](const Var& x) { return ops::sum_axis(x, 1); }, {3, 5}));
  cases.push_back(unary(mk, "mean_axis_keepdim", mk.uniform({3, 4, 5}),
                        [](const Var& x) { return ops::mean_axis(x, 2, true); }, {3, 4, 1}));
  cases.push_back(unary(mk, "reshape", mk.uniform({3, 4}), [](const Var& x) { return ops::reshape(x, {2, -1}); }, {2, 6}));
  cases.push_back(unary(mk, "permute", mk.uniform({2, 3, 4}),
                        [](const Var& x) { return ops::permute(x, {2, 0, 1}); }, {4, 2, 3}));
  cases.push_back(unary(mk, "narrow", mk.uniform({3, 8}), [](const Var& x) { return ops::narrow(x, 1, 2, 4); }, {3, 4}));
  cases.push_back(binary(mk, "concat", mk.uniform({2, 3}), mk.uniform({2, 5}),
                         [](const Var& a, const Var& b) { return ops::concat({a, b}, 1); }, {2, 8}));
  cases.push_back(unary(mk, "index_select", mk.uniform({5, 3}),
                        [](const Var& x) { return ops::index_select(x, {4, 0, 4, 2}); }, {4, 3}));
  cases.push_back(unary(mk, "take", mk.uniform({4, 4}), [](const Var& x) { return ops::take(x, {0, 5, 5, 15, 9}); }, {5}));

  cases.push_back(binary(mk, "matmul", mk.uniform({5, 7}), mk.uniform({7, 3}),
                         [](const Var& a, const Var& b) { return ops::matmul(a, b); }, {5, 3}));
  cases.push_back(binary(mk, "matmul_shared_rhs", mk.uniform({2, 4, 6}), mk.uniform({6, 3}),
                         [](const Var& a, const Var& b) { return ops::matmul(a, b); }, {2, 4, 3}));
  cases.push_back(binary(mk, "matmul_batched_transposed", mk.uniform({3, 4, 5}), mk.uniform({3, 6, 5}),
                         [](const Var& a, const Var& b) { return ops::matmul(a, b, true); }, {3, 4, 6}));
  {
    Var x = mk.uniform({2, 3, 6}), w = mk.uniform({6, 4}), b = mk.uniform({4});
    auto wt = mk.weights({2, 3, 4});
    cases.push_back({"linear", [=] { return contract(ops::linear(x, w, b), wt); }, {{"x", x}, {"w", w}, {"b", b}}, {}});
  }
  {
    Var x = mk.uniform({2, 3, 7, 6}), w = mk.uniform({4, 3, 3, 3}), b = mk.uniform({4});
    auto wt = mk.weights({2, 4, 4, 3});
    cases.push_back({"conv2d_stride2_pad1", [=] { return contract(ops::conv2d(x, w, b, 2, 1), wt); },
                     {{"x", x}, {"w", w}, {"b", b}}, {}});
  }
  {
    Var x = mk.uniform({1, 3, 8, 8}), w = mk.uniform({5, 3, 4, 4}), b = mk.uniform({5});
    auto wt = mk.weights({1, 5, 2, 2});
    cases.push_back({"conv2d_patchify", [=] { return contract(ops::conv2d(x, w, b, 4, 0), wt); },
                     {{"x", x}, {"w", w}, {"b", b}}, {}});
  }
  {
    Var x = mk.uniform({2, 3, 4, 3}), w = mk.uniform({3, 2, 4, 4}), b = mk.uniform({2});
    auto wt = mk.weights({2, 2, 8, 6});
    cases.push_back({"conv_transpose2d", [=] { return contract(ops::conv_transpose2d(x, w, b, 2, 1), wt); },
                     {{"x", x}, {"w", w}, {"b", b}}, {}});
  }
  cases.push_back(unary(mk, "bilinear_align_corners", mk.uniform({1, 2, 4, 4}),
                        [](const Var& x) { return ops::bilinear_resize(x, 6, 3, true); }, {1, 2, 6, 3}));
  cases.push_back(unary(mk, "bilinear_half_pixel", mk.uniform({2, 1, 3, 5}),
                        [](const Var& x) { return ops::bilinear_resize(x, 12, 10, false); }, {2, 1, 12, 10}));

  cases.push_back(unary(mk, "softmax", mk.uniform({3, 6}, -2, 2), [](const Var& x) { return ops::softmax(x, 1); }, {3, 6}));
  cases.push_back(unary(mk, "softmax_axis0", mk.uniform({4, 3}, -2, 2),
                        [](const Var& x) { return ops::softmax(x, 0); }, {4, 3}));
  cases.push_back(unary(mk, "log_softmax", mk.uniform({3, 6}, -2, 2),
                        [](const Var& x) { return ops::log_softmax(x, -1); }, {3, 6}));
  {
    Var x = mk.uniform({3, 8}, -2, 2), g = mk.uniform({8}, 0.5, 1.5), b = mk.uniform({8});
    auto wt = mk.weights({3, 8});
    cases.push_back({"layer_norm", [=] { return contract(ops::layer_norm(x, g, b), wt); },
                     {{"x", x}, {"gamma", g}, {"beta", b}}, {}});
  }
  {
    Var x = mk.uniform({2, 5, 3, 3}, -2, 2), g = mk.uniform({5}, 0.5, 1.5), b = mk.uniform({5});
    auto wt = mk.weights({2, 5, 3, 3});
    cases.push_back({"layer_norm_channels", [=] { return contract(ops::layer_norm_channels(x, g, b), wt); },
                     {{"x", x}, {"gamma", g}, {"beta", b}}, {}});
  }
  {
    Var x = mk.uniform({4, 3, 2, 2}, -2, 2), g = mk.uniform({3}, 0.5, 1.5), b = mk.uniform({3});
    auto wt = mk.weights({4, 3, 2, 2});
    auto state = std::make_shared<ops::BatchNormState>(3);
    cases.push_back({"batch_norm_train",
                     [=] {
                       auto s = *state;  // running statistics must not drift between probes
                       return contract(ops::batch_norm(x, g, b, s, ops::BatchNormMode::Train), wt);
                     },
                     {{"x", x}, {"gamma", g}, {"beta", b}},
                     {}});
    auto eval_state = std::make_shared<ops::BatchNormState>(3);
    eval_state->running_mean = Tensor::from({3}, {0.1f, -0.2f, 0.3f});
    eval_state->running_var = Tensor::from({3}, {0.5f, 1.5f, 2.0f});
    cases.push_back({"batch_norm_eval",
                     [=] { return contract(ops::batch_norm(x, g, b, *eval_state, ops::BatchNormMode::Eval), wt); },
                     {{"x", x}, {"gamma", g}, {"beta", b}},
                     {}});
  }

  {
    Var logits = mk.uniform({6, 4}, -2, 2);
    std::vector<int> labels{0, 3, -1, 1, 2, 3};
    cases.push_back({"cross_entropy", [=] { return ops::cross_entropy(logits, labels); }, {{"logits", logits}}, {}});
    std::vector<real> cw{1.0f, 0.5f, 2.0f, 0.1f};
    cases.push_back({"cross_entropy_weighted", [=] { return ops::cross_entropy(logits, labels, cw); },
                     {{"logits", logits}}, {}});
  }
  {
    Var logits = mk.uniform({3, 5}, -3, 3);
    Tensor targets({3, 5});
    for (auto& v : targets.data()) v = mk.rng().bernoulli(0.5) ? 1.0f : 0.0f;
    cases.push_back({"bce_with_logits", [=] { return ops::binary_cross_entropy_with_logits(logits, targets); },
                     {{"logits", logits}}, {}});
  }
  {
    Var p = mk.uniform({2, 7});
    Tensor target = mk.weights({2, 7});
    cases.push_back({"mse", [=] { return ops::mse_loss(p, target); }, {{"prediction", p}}, {}});
  }
  cases.push_back(unary(mk, "tokens_to_map", mk.uniform({2, 6, 3}),
                        [](const Var& x) { return nn::tokens_to_map(x, 2, 3); }, {2, 3, 2, 3}));
  return cases;
}

}  // namespace path_engine::verify
