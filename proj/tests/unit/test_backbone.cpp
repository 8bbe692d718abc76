#include <algorithm>

#include "helpers.hpp"
#include "path_engine/backbone.hpp"
#include "path_engine/errors.hpp"

using namespace test;

namespace {

BackboneConfig desk() { return {}; }

}  // namespace

TEST_CASE("patch grid follows image extents") {
  ParamStore store(1);
  VitBackbone bb(desk(), store);
  auto fm = bb.patch_embed(leaf({2, 3, 32, 32}, 1));
  CHECK(fm.grid_h == 8);
  CHECK(fm.grid_w == 8);
  CHECK(fm.tokens.shape() == Shape{2, 64, 32});

  BackboneConfig big{.patch_size = 16, .embed_dim = 16, .depth = 1, .heads = 2, .canonical_image = 224};
  ParamStore store2(1);
  VitBackbone bb2(big, store2);
  auto fm2 = bb2.patch_embed(leaf({1, 3, 256, 192}, 2));
  CHECK(fm2.grid_h == 16);
  CHECK(fm2.grid_w == 12);

  CHECK_THROWS_AS(bb.patch_embed(leaf({1, 3, 30, 32}, 3)), GeometryError);
  CHECK_THROWS_AS(bb.patch_embed(leaf({1, 1, 32, 32}, 3)), GeometryError);
}

TEST_CASE("zero image through a zero-bias stem gives zero tokens") {
  ParamStore store(2);
  VitBackbone bb(desk(), store);
  for (real b : store.get("backbone.patch_embed.bias").var.value().data()) REQUIRE(b == 0.0f);
  auto fm = bb.patch_embed(Var(Tensor({1, 3, 32, 32})));
  for (real v : fm.tokens.value().data()) CHECK(v == 0.0f);
}

TEST_CASE("positional embedding is one canonical parameter resized per input") {
  ParamStore store(3);
  VitBackbone bb(desk(), store);
  const auto& pe = store.get(VitBackbone::kSharedPosEmbed).var;
  auto same = bb.positional_embedding_for(32, 32);
  CHECK(same.shape() == Shape{1, 64, 32});
  CHECK(same.value() == nn::map_to_tokens(pe).value());

  store.get(VitBackbone::kSharedPosEmbed).var.mutable_value().storage().assign(32 * 64, 0.25f);
  auto resized = bb.positional_embedding_for(48, 32);
  CHECK(resized.shape() == Shape{1, 12 * 8, 32});
  for (real v : resized.value().data()) CHECK(v == doctest::Approx(0.25));

  // Two input geometries read the same parameter: gradients from both land on it.
  pe.node()->clear_grad();
  ops::add(ops::sum(bb.positional_embedding_for(48, 32)), ops::sum(bb.positional_embedding_for(32, 32))).backward();
  CHECK(pe.has_grad());
  std::size_t count = 0;
  for (const auto& n : store.names()) count += n.find("pos_embed") != std::string::npos;
  CHECK(count == 1);
}

TEST_CASE("separate positional embeddings create one parameter per name") {
  ParamStore store(4);
  VitBackbone bb(desk(), store, {"backbone.pos_embed.reid", "backbone.pos_embed.parsing"});
  CHECK(store.contains("backbone.pos_embed.reid"));
  CHECK(store.contains("backbone.pos_embed.parsing"));
  CHECK_FALSE(store.contains(VitBackbone::kSharedPosEmbed));
  auto x = leaf({1, 3, 32, 32}, 4);
  CHECK_FALSE(bb.forward_features(x, "backbone.pos_embed.reid").final.tokens.value() ==
              bb.forward_features(x, "backbone.pos_embed.parsing").final.tokens.value());
}

TEST_CASE("transformer block properties") {
  ParamStore store(5);
  VitBackbone bb(desk(), store);
  auto single = leaf({1, 1, 32}, 5);
  auto out = bb.transformer_block(1, single);
  CHECK(out.shape() == single.shape());

  nn::MultiHeadAttention attn(store, "backbone.scratch.attn", 32, 4, {});
  attn(single);
  for (real w : attn.last_attention().data()) CHECK(w == doctest::Approx(1.0));

  // Token permutation commutes with a block.
  const std::int64_t n = 6;
  auto x = leaf({1, n, 32}, 6);
  std::vector<std::int64_t> perm{3, 0, 5, 1, 4, 2};
  auto permuted = ops::reshape(ops::index_select(ops::reshape(x, {n, 32}), perm), {1, n, 32});
  auto y = ops::reshape(bb.transformer_block(2, x), {n, 32});
  auto yp = ops::reshape(bb.transformer_block(2, permuted), {n, 32});
  check_close(ops::index_select(y, perm).value(), yp.value(), 1e-5);
}

TEST_CASE("forward_features taps") {
  BackboneConfig cfg = desk();
  cfg.tap_layers = {1, 2, 3, 4};
  ParamStore store(6);
  VitBackbone bb(cfg, store);
  auto img = leaf({2, 3, 32, 32}, 7);
  auto f = bb.forward_features(img);
  CHECK(f.taps.size() == 4);
  CHECK(f.final.tokens.value() == f.taps.back().tokens.value());
  auto again = bb.forward_features(img);
  for (std::size_t i = 0; i < f.taps.size(); ++i) CHECK(bitwise_equal(f.taps[i].tokens.value(), again.taps[i].tokens.value()));

  BackboneConfig deep{.patch_size = 4, .embed_dim = 8, .depth = 12, .heads = 2, .canonical_image = 8};
  CHECK(deep.resolved_taps() == std::vector<std::int64_t>{5, 6, 7, 8, 9, 10, 11, 12});
  ParamStore store2(7);
  VitBackbone bb2(deep, store2);
  CHECK(bb2.forward_features(leaf({1, 3, 8, 8}, 8)).taps.size() == 8);
  CHECK(desk().resolved_taps() == std::vector<std::int64_t>{1, 2, 3, 4});
}

TEST_CASE("backbone config validation and state errors") {
  CHECK_THROWS_AS(BackboneConfig({.embed_dim = 30, .heads = 4}).validate(), ConfigError);
  CHECK_THROWS_AS(BackboneConfig({.canonical_image = 30}).validate(), ConfigError);
  CHECK_THROWS_AS(BackboneConfig({.tap_layers = {2, 1}}).validate(), ConfigError);
  CHECK_THROWS_AS(BackboneConfig({.tap_layers = {5}}).validate(), ConfigError);
  VitBackbone empty;
  CHECK_THROWS_AS(empty.forward_features(leaf({1, 3, 32, 32}, 1)), StateError);
}

TEST_CASE("all backbone parameters are named backbone.* and carry global scope") {
  ParamStore store(8);
  VitBackbone bb(desk(), store);
  for (const auto* p : store.parameters()) {
    CHECK(p->name.rfind("backbone.", 0) == 0);
    CHECK(p->scope == SharingScope::global());
  }
  CHECK(store.get("backbone.blocks.4.mlp.fc1.weight").depth_index == 4);
  CHECK(store.get("backbone.patch_embed.weight").depth_index == 0);
}
