#include <cmath>

#include "helpers.hpp"
#include "path_engine/errors.hpp"

using namespace test;

TEST_CASE("matmul examples") {
  Var eye(Tensor::from({2, 2}, {1, 0, 0, 1}));
  Var a(Tensor::from({2, 2}, {1, 2, 3, 4}));
  CHECK(ops::matmul(eye, a).value() == a.value());
  Var ones(Tensor::from({2, 1}, {1, 1}));
  CHECK(ops::matmul(a, ones).value() == Tensor::from({2, 1}, {3, 7}));
  Var bad(Tensor({3, 1}));
  CHECK_THROWS_AS(ops::matmul(a, bad), DimensionError);
}

TEST_CASE("gradient of sum(A B) with respect to A is B^T broadcast") {
  Var a = leaf({3, 4}, 1), b = leaf({4, 2}, 2);
  ops::sum(ops::matmul(a, b)).backward();
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t k = 0; k < 4; ++k) {
      const float expected = b.value()[k * 2] + b.value()[k * 2 + 1];
      CHECK(a.grad()[static_cast<std::size_t>(i * 4 + k)] == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("conv2d examples") {
  Var x = leaf({1, 1, 5, 5}, 3);
  Var one(Tensor({1, 1, 1, 1}, 1.0f));
  CHECK(ops::conv2d(x, one, Var(), 1, 0).value() == x.value());

  Var x3 = leaf({1, 1, 3, 3}, 4), w3 = leaf({1, 1, 3, 3}, 5);
  double frob = 0.0;
  for (int i = 0; i < 9; ++i) frob += x3.value()[i] * w3.value()[i];
  auto y = ops::conv2d(x3, w3, Var(), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(frob).epsilon(1e-6));

  Var img = leaf({2, 3, 32, 32}, 6), patch = leaf({8, 3, 4, 4}, 7);
  CHECK(ops::conv2d(img, patch, Var(), 4, 0).shape() == Shape{2, 8, 8, 8});
  CHECK(ops::conv2d(leaf({1, 1, 7, 7}, 8), leaf({1, 1, 3, 3}, 9), Var(), 2, 1).shape() == Shape{1, 1, 4, 4});

  CHECK_THROWS_AS(ops::conv2d(leaf({1, 1, 2, 2}, 1), leaf({1, 1, 5, 5}, 2), Var(), 1, 0), DimensionError);
  CHECK_THROWS_AS(ops::conv2d(leaf({1, 2, 4, 4}, 1), leaf({1, 3, 1, 1}, 2), Var(), 1, 0), DimensionError);
}

TEST_CASE("transposed conv doubles extents and equals the input-gradient of conv2d") {
  Var x = leaf({2, 3, 4, 4}, 10);
  Var w = leaf({3, 5, 4, 4}, 11);
  auto y = ops::conv_transpose2d(x, w, Var(), 2, 1);
  CHECK(y.shape() == Shape{2, 5, 8, 8});

  // conv2d from 5 to 3 channels on an 8x8 input yields 4x4; its input
  // gradient under seed x is the transposed conv of x with the same weights.
  Var z(Tensor({2, 5, 8, 8}), true);
  auto c = ops::conv2d(z, Var(w.value()), Var(), 2, 1);
  REQUIRE(c.shape() == x.shape());
  c.backward(x.value());
  auto g = z.grad_tensor();
  check_close(g, y.value(), 1e-5);

  Var zero(Tensor({1, 3, 4, 4}));
  auto zy = ops::conv_transpose2d(zero, w, Var(), 2, 1);
  for (float v : zy.value().data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(ops::conv_transpose2d(leaf({1, 2, 4, 4}, 1), w, Var(), 2, 1), DimensionError);
}

TEST_CASE("layer norm examples") {
  Var g(Tensor({3}, 1.0f)), b(Tensor({3}, 0.0f));
  Var c(Tensor({2, 3}, 4.0f));
  auto zeros = ops::layer_norm(c, g, b);
  for (float v : zeros.value().data()) CHECK(v == 0.0f);
  Var g2(Tensor({2}, 1.0f)), b2(Tensor({2}, 0.0f));
  auto y = ops::layer_norm(Var(Tensor::from({1, 2}, {1, 3})), g2, b2, 0.0f);
  CHECK(y.value()[0] == doctest::Approx(-1.0));
  CHECK(y.value()[1] == doctest::Approx(1.0));
}

TEST_CASE("batch norm examples") {
  Var g(Tensor({2}, 1.0f)), b(Tensor({2}, 0.0f));
  ops::BatchNormState state(2);
  Var x = leaf({4, 2}, 12);
  check_close(ops::batch_norm(x, g, b, state, ops::BatchNormMode::Eval).value(), x.value(), 1e-5);

  ops::BatchNormState s2(1);
  s2.eps = 0.0f;
  Var g1(Tensor({1}, 1.0f)), b1(Tensor({1}, 0.0f));
  auto y = ops::batch_norm(Var(Tensor::from({2, 1}, {0, 2})), g1, b1, s2, ops::BatchNormMode::Train);
  CHECK(y.value()[0] == doctest::Approx(-1.0));
  CHECK(y.value()[1] == doctest::Approx(1.0));
  // momentum 0.1 with the unbiased variance 2 of {0, 2}
  CHECK(s2.running_mean[0] == doctest::Approx(0.1));
  CHECK(s2.running_var[0] == doctest::Approx(0.9 + 0.1 * 2.0));

  ops::BatchNormState s3(2);
  Var batch = leaf({3, 2, 2, 2}, 13);
  auto train = ops::batch_norm(batch, g, b, s3, ops::BatchNormMode::Train);
  auto eval = ops::batch_norm(batch, g, b, s3, ops::BatchNormMode::Eval);
  CHECK_FALSE(train.value() == eval.value());

  ops::BatchNormState s4(2);
  CHECK_THROWS_AS(ops::batch_norm(leaf({1, 2}, 1), g, b, s4, ops::BatchNormMode::Train), DegenerateBatchError);
  CHECK_NOTHROW(ops::batch_norm(leaf({1, 2}, 1), g, b, s4, ops::BatchNormMode::Eval));
}

TEST_CASE("pointwise and softmax examples") {
  CHECK(ops::sigmoid(Var(Tensor::scalar(0.0f))).item() == 0.5f);
  auto r = ops::relu(Var(Tensor::from({2}, {-3, 3})));
  CHECK(r.value() == Tensor::from({2}, {0, 3}));
  auto s = ops::softmax(Var(Tensor({2, 5}, 7.0f)), 1);
  for (float v : s.value().data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-7));

  auto rs = ops::softmax(leaf({4, 6}, 14, -5, 5), -1);
  for (int i = 0; i < 4; ++i) {
    double total = 0.0;
    for (int j = 0; j < 6; ++j) {
      CHECK(rs.value()[i * 6 + j] >= 0.0f);
      total += rs.value()[i * 6 + j];
    }
    CHECK(std::fabs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("bilinear resize examples") {
  Var x = leaf({1, 2, 14, 14}, 15);
  CHECK(ops::bilinear_resize(x, 14, 14, true).value() == x.value());
  CHECK(ops::bilinear_resize(x, 14, 14, false).value() == x.value());
  for (bool ac : {true, false}) {
    auto r = ops::bilinear_resize(Var(Tensor({1, 1, 3, 5}, 5.0f)), 7, 2, ac);
    for (float v : r.value().data()) CHECK(v == doctest::Approx(5.0).epsilon(1e-6));
  }
  auto y = ops::bilinear_resize(Var(Tensor::from({1, 1, 2, 2}, {0, 1, 2, 3})), 3, 3, true);
  CHECK(y.value() == Tensor::from({1, 1, 3, 3}, {0, 0.5f, 1, 1, 1.5f, 2, 2, 2.5f, 3}));
  CHECK_THROWS_AS(ops::bilinear_resize(x, 0, 3, true), DimensionError);
}

TEST_CASE("losses") {
  // logit gap 10 on the labelled class: CE = log(1 + e^-10) per pixel
  Var logits(Tensor::from({2, 2}, {10, 0, 0, 10}));
  auto ce = ops::cross_entropy(logits, {0, 1});
  CHECK(ce.item() < 1e-3);
  CHECK(ce.item() == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-4));

  auto bce = ops::binary_cross_entropy_with_logits(Var(Tensor({3, 4})), Tensor({3, 4}, 1.0f));
  CHECK(bce.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  Var p = leaf({3, 3}, 16);
  CHECK(ops::mse_loss(p, p.value()).item() == 0.0f);
  CHECK(ops::cross_entropy(Var(Tensor({2, 3})), {-1, 2}).item() == doctest::Approx(std::log(3.0)));
}

TEST_CASE("lerp stays inside the envelope of its endpoints") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    Var a(uniform_tensor({16}, -100, 100, rng)), b(uniform_tensor({16}, -100, 100, rng));
    Var mu(Tensor::scalar(static_cast<float>(rng.uniform())));
    auto y = ops::lerp(a, b, mu);
    for (int i = 0; i < 16; ++i) {
      CHECK(y.value()[i] >= std::min(a.value()[i], b.value()[i]));
      CHECK(y.value()[i] <= std::max(a.value()[i], b.value()[i]));
    }
  }
}

TEST_CASE("forward passes are bitwise deterministic") {
  Var x = leaf({2, 3, 8, 8}, 18), w = leaf({4, 3, 3, 3}, 19);
  auto y1 = ops::softmax(ops::conv2d(x, w, Var(), 1, 1), 1);
  auto y2 = ops::softmax(ops::conv2d(x, w, Var(), 1, 1), 1);
  CHECK(bitwise_equal(y1.value(), y2.value()));
}
