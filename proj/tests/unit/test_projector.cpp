#include <cmath>

#include "helpers.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/projector.hpp"

using namespace test;

namespace {

constexpr std::int64_t kDim = 8;

}  // namespace

TEST_CASE("SE block with zero squeeze weights halves the input") {
  ParamStore store(1);
  TaskProjector proj({}, store, "reid", kDim, 1, 5);
  for (auto& w : store.get("projector.reid.1.se.weight").var.mutable_value().data()) w = 0.0f;
  auto f = leaf({2, 6, kDim}, 1);
  auto e = proj.se_block(1, f);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(e.value()[i] == 0.5f * f.value()[i]);
}

TEST_CASE("squeeze of a spatially constant map equals its channel constants") {
  ParamStore store(2);
  TaskProjector proj({}, store, "reid", kDim, 1, 5);
  store.get("projector.reid.1.se.weight").var.mutable_value() = Tensor::from({3}, {0, 1, 0});
  Tensor f({1, 4, kDim});
  for (std::int64_t t = 0; t < 4; ++t)
    for (std::int64_t c = 0; c < kDim; ++c) f[t * kDim + c] = 0.1f * static_cast<real>(c) - 0.3f;
  auto att = proj.channel_attention(1, Var(f));
  for (std::int64_t c = 0; c < kDim; ++c) {
    const double s = std::log(att.value()[c] / (1.0 - att.value()[c]));
    CHECK(s == doctest::Approx(0.1 * c - 0.3).epsilon(1e-5));
  }
}

TEST_CASE("project_layer on a single position reduces to the value path") {
  ParamStore store(3);
  TaskProjector proj({}, store, "pose", kDim, 1, 5);
  auto f = leaf({1, 1, kDim}, 3);
  auto e = proj.se_block(1, f);
  nn::LayerNorm norm;
  norm.gamma = &store.get("projector.pose.1.norm.weight");
  norm.beta = &store.get("projector.pose.1.norm.bias");
  nn::Linear v, out;
  v.weight = &store.get("projector.pose.1.attn.v.weight");
  v.bias = &store.get("projector.pose.1.attn.v.bias");
  out.weight = &store.get("projector.pose.1.attn.out.weight");
  out.bias = &store.get("projector.pose.1.attn.out.bias");
  auto expected = ops::add(e, out(v(norm(e))));
  check_close(proj.project_layer(1, f).value(), expected.value(), 1e-6);
  CHECK(bitwise_equal(proj.project_layer(1, f).value(), proj.project_layer(1, f).value()));
}

TEST_CASE("gate values") {
  CHECK(gate_value(Var(Tensor::scalar(0.0f)), 0.1).item() == 0.5f);
  CHECK(std::fabs(gate_value(Var(Tensor::scalar(0.1f)), 0.1).item() - 0.7310586) < 1e-6);
  double prev = 0.0;
  for (double a = -1.0; a <= 1.0; a += 0.05) {
    const double mu = gate_value(Var(Tensor::scalar(static_cast<real>(a))), 0.1).item();
    CHECK(mu > prev);
    prev = mu;
  }
}

TEST_CASE("gate_fuse examples") {
  auto z1 = leaf({2, 3}, 4), z2 = leaf({2, 3}, 5);
  Var half(Tensor::scalar(0.5f));
  auto p = gate_fuse({z1, z2}, {half});
  for (int i = 0; i < 6; ++i) CHECK(p.value()[i] == doctest::Approx(0.5 * z2.value()[i] + 0.5 * z1.value()[i]));

  auto z3 = leaf({2, 3}, 6);
  auto saturated = gate_value(Var(Tensor::scalar(100.0f)), 0.1);
  auto ps = gate_fuse({z1, z2, z3}, {saturated, saturated});
  CHECK(ps.value() == z3.value());
  CHECK(gate_fuse({z1}, {}).value() == z1.value());

  CHECK_THROWS_AS(gate_fuse({z1, leaf({3, 2}, 7)}, {half}), DimensionError);
  CHECK_THROWS_AS(gate_fuse({z1, z2}, {}), DimensionError);
}

TEST_CASE("every gate is 0.5 at initialization and excluded from weight decay") {
  ParamStore store(4);
  TaskProjector proj({}, store, "parsing", kDim, 4, 5);
  CHECK_FALSE(store.contains("projector.parsing.1.gate"));
  for (std::int64_t l = 2; l <= 4; ++l) {
    CHECK(store.get("projector.parsing." + std::to_string(l) + ".gate").var.item() == 0.0f);
    CHECK_FALSE(store.get("projector.parsing." + std::to_string(l) + ".gate").weight_decay);
    CHECK(proj.gate(l).item() == 0.5f);
  }
  CHECK(store.get("projector.parsing.3.attn.q.weight").weight_decay);
}

TEST_CASE("projector forward") {
  ParamStore store(5);
  TaskProjector one({}, store, "a", kDim, 1, 5);
  std::vector<FeatureMap> tap{{leaf({2, 6, kDim}, 8), 2, 3}};
  CHECK(one.forward(tap).tokens.value() == one.project_layer(1, tap[0].tokens).value());

  TaskProjector three({}, store, "b", kDim, 3, 5);
  CHECK_THROWS_AS(three.forward(tap), ConfigError);
  std::vector<FeatureMap> taps{tap[0], {leaf({2, 6, kDim}, 9), 2, 3}, {leaf({2, 6, kDim}, 10), 2, 3}};
  auto p = three.forward(taps);
  CHECK(p.tokens.shape() == taps[0].tokens.shape());
  CHECK(p.grid_h == 2);
  CHECK(p.tokens.value().all_finite());

  // At init all gates are 0.5: p = 0.25 z1 + 0.25 z2 + 0.5 z3.
  auto z1 = three.project_layer(1, taps[0].tokens), z2 = three.project_layer(2, taps[1].tokens),
       z3 = three.project_layer(3, taps[2].tokens);
  for (std::int64_t i = 0; i < p.tokens.numel(); ++i)
    CHECK(p.tokens.value()[i] ==
          doctest::Approx(0.25 * z1.value()[i] + 0.25 * z2.value()[i] + 0.5 * z3.value()[i]).epsilon(1e-5));
}

TEST_CASE("gate_fuse output stays inside the elementwise envelope") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto layers = rng.integer(1, 8);
    std::vector<Var> z, mu;
    for (std::int64_t l = 0; l < layers; ++l) {
      z.emplace_back(uniform_tensor({5}, -10, 10, rng));
      if (l > 0) mu.push_back(gate_value(Var(Tensor::scalar(static_cast<real>(rng.uniform(-2, 2)))), 0.1));
    }
    auto p = gate_fuse(z, mu);
    for (int i = 0; i < 5; ++i) {
      real lo = z[0].value()[i], hi = lo;
      for (const auto& v : z) {
        lo = std::min(lo, v.value()[i]);
        hi = std::max(hi, v.value()[i]);
      }
      CHECK(p.value()[i] >= lo);
      CHECK(p.value()[i] <= hi);
    }
  }
}

TEST_CASE("share type parsing") {
  CHECK(parse_share_type("A") == ShareType::All);
  CHECK(parse_share_type("S") == ShareType::Dataset);
  CHECK(parse_share_type("T") == ShareType::Task);
  CHECK(to_string(ShareType::Dataset) == "S");
  CHECK_THROWS_AS(parse_share_type("X"), ConfigError);
}
