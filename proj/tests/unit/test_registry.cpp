#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "path_engine/checkpoint.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/registry.hpp"

using namespace test;

namespace {

std::vector<TaskDatasets> two_tasks() { return {{"reid", {"r1", "r2"}}, {"parsing", {"p1"}}}; }

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("path_engine_test_" + name);
}

}  // namespace

TEST_CASE("group enumeration per share type") {
  SharingRegistry t(two_tasks(), ShareType::Task, true);
  CHECK(t.count(GroupKind::Backbone) == 1);
  CHECK(t.count(GroupKind::PosEmbed) == 1);
  CHECK(t.count(GroupKind::Projector) == 2);
  CHECK(t.count(GroupKind::Head) == 3);
  CHECK(SharingRegistry(two_tasks(), ShareType::All, true).count(GroupKind::Projector) == 1);
  CHECK(SharingRegistry(two_tasks(), ShareType::Dataset, true).count(GroupKind::Projector) == 3);
  CHECK(SharingRegistry(two_tasks(), ShareType::Task, false).count(GroupKind::PosEmbed) == 2);

  CHECK_THROWS_AS(SharingRegistry({{"reid", {"a"}}, {"pose", {"a"}}}, ShareType::Task, true), ConfigError);
  CHECK_THROWS_AS(SharingRegistry({{"reid", {"a"}}, {"reid", {"b"}}}, ShareType::Task, true), ConfigError);
  CHECK_THROWS_AS(SharingRegistry({{"reid", {}}}, ShareType::Task, true), ConfigError);
  CHECK_THROWS_AS(SharingRegistry({}, ShareType::Task, true), ConfigError);
  CHECK_THROWS_AS(SharingRegistry({{"re.id", {"a"}}}, ShareType::Task, true), ConfigError);
}

TEST_CASE("sync sets") {
  SharingRegistry reg({{"a", {"a1", "a2", "a3"}}, {"b", {"b1", "b2"}}}, ShareType::Task, true);
  CHECK(reg.num_workers() == 5);
  CHECK(reg.sync_set("backbone.blocks.1.attn.q.weight") == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(reg.sync_set("backbone.pos_embed") == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(reg.sync_set("projector.b.1.se.weight") == std::vector<int>{3, 4});
  CHECK(reg.sync_set("head.a.a2.fc.weight") == std::vector<int>{1});
  CHECK_THROWS_AS(reg.sync_set("projector.c.1.se.weight"), LookupError);
  CHECK_THROWS_AS(reg.sync_set("head.a.b1.fc.weight"), LookupError);
  CHECK_THROWS_AS(reg.sync_set("backbone.pos_embed.a"), LookupError);
  CHECK_THROWS_AS(reg.sync_set("misc"), LookupError);

  SharingRegistry all({{"a", {"a1", "a2", "a3"}}, {"b", {"b1", "b2"}}}, ShareType::All, false);
  CHECK(all.projector_group(3) == "all");
  CHECK(all.scope_of("projector.all.2.gate") == SharingScope::global());
  CHECK(all.pos_embed_name(4) == "backbone.pos_embed.b");
  CHECK(all.sync_set("backbone.pos_embed.b") == std::vector<int>{3, 4});
  CHECK_THROWS_AS(all.sync_set("backbone.pos_embed"), LookupError);

  SharingRegistry per({{"a", {"a1", "a2", "a3"}}, {"b", {"b1", "b2"}}}, ShareType::Dataset, true);
  CHECK(per.projector_group(1) == "a2");
  CHECK(per.sync_set("projector.a2.1.norm.weight") == std::vector<int>{1});
}

TEST_CASE("every parameter of a worker model is housed") {
  SharingRegistry reg(two_tasks(), ShareType::Task, false);
  for (const auto& w : reg.workers()) {
    ParamStore store(3, reg.resolver());
    BackboneConfig cfg{.embed_dim = 8, .depth = 2, .heads = 2};
    VitBackbone bb(cfg, store, {reg.pos_embed_name(w.index)});
    TaskProjector proj({}, store, reg.projector_group(w.index), 8, 2, 3);
    auto head = make_head({.family = TaskFamily::Attribute, .num_outputs = 2}, store,
                          SharingRegistry::head_prefix(w.task, w.dataset), 8, 3);
    for (const auto& row : registry_rows(reg, store)) {
      const auto set = reg.sync_set(row.name);
      CHECK(std::find(set.begin(), set.end(), w.index) != set.end());
    }
    CHECK(format_registry(registry_rows(reg, store)).find("backbone.patch_embed.weight") != std::string::npos);
  }
}

TEST_CASE("freeze masks") {
  std::vector<std::string> names{"backbone.patch_embed.weight", "backbone.pos_embed",
                                 "backbone.blocks.1.mlp.fc1.weight", "backbone.blocks.2.norm1.weight",
                                 "backbone.blocks.3.attn.q.weight", "backbone.blocks.4.norm2.bias",
                                 "backbone.blocks.10.norm2.bias", "head.attr.x.fc.weight"};
  auto head = freeze_mask(Protocol::HeadFt, names, 4);
  CHECK(head.trainable == std::set<std::string>{"head.attr.x.fc.weight"});
  CHECK(head.zero_weight_decay);
  auto partial = freeze_mask(Protocol::PartialFt, names, 4, 2);
  CHECK(partial.trainable == std::set<std::string>{"backbone.blocks.3.attn.q.weight", "backbone.blocks.4.norm2.bias",
                                                   "head.attr.x.fc.weight"});
  CHECK(partial.zero_weight_decay);
  auto full = freeze_mask(Protocol::FullFt, names, 4);
  CHECK(full.trainable.size() == names.size());
  CHECK_FALSE(full.zero_weight_decay);
  CHECK_THROWS_AS(freeze_mask(Protocol::PartialFt, names, 4, 5), ConfigError);
  CHECK(parse_protocol("partial") == Protocol::PartialFt);
  CHECK_THROWS_AS(parse_protocol("most"), ConfigError);
}

TEST_CASE("discard_projectors keeps the backbone and drops projector names") {
  BackboneConfig cfg{.embed_dim = 8, .depth = 2, .heads = 2};
  SharingRegistry reg(two_tasks(), ShareType::Task, true);
  ParamStore store(4, reg.resolver());
  VitBackbone bb(cfg, store);
  TaskProjector proj({}, store, "reid", 8, 2, 3);
  auto ph = make_head({.family = TaskFamily::ReID, .num_outputs = 3}, store, "head.reid.r1", 8, 3);
  for (auto& v : store.get("backbone.blocks.2.mlp.fc2.bias").var.mutable_value().data()) v = 0.125f;
  auto ckpt = snapshot(store);

  HeadConfig down{.family = TaskFamily::Attribute, .num_outputs = 4};
  auto model = discard_projectors(ckpt.params, cfg, down, "head.attribute.eval", 9);
  for (const auto& n : model.store->names()) CHECK(n.rfind("projector.", 0) != 0);
  CHECK_FALSE(model.store->contains("head.reid.r1.bn.weight"));
  auto img = leaf({2, 3, 32, 32}, 5);
  CHECK(bitwise_equal(model.features(img).tokens.value(), bb.forward_features(img).final.tokens.value()));

  std::size_t head_params = 0;
  for (const auto& n : model.store->names()) head_params += n.rfind("head.", 0) == 0;
  ParamStore big(4, SharingRegistry({{"reid", {"r1", "r2", "r3"}}, {"pose", {"p1"}}, {"x", {"x1"}}}, ShareType::Task, true).resolver());
  VitBackbone bb2(cfg, big);
  auto model2 = discard_projectors(snapshot(big).params, cfg, down, "head.attribute.eval", 9);
  std::size_t head_params2 = 0;
  for (const auto& n : model2.store->names()) head_params2 += n.rfind("head.", 0) == 0;
  CHECK(head_params == head_params2);
}

TEST_CASE("discard_projectors averages per-task positional embeddings") {
  BackboneConfig cfg{.embed_dim = 8, .depth = 1, .heads = 2};
  ParamStore store(5, SharingRegistry(two_tasks(), ShareType::Task, false).resolver());
  VitBackbone bb(cfg, store, {"backbone.pos_embed.reid", "backbone.pos_embed.parsing"});
  store.get("backbone.pos_embed.reid").var.mutable_value().storage().assign(8 * 64, 1.0f);
  store.get("backbone.pos_embed.parsing").var.mutable_value().storage().assign(8 * 64, 2.0f);
  auto model = discard_projectors(snapshot(store).params, cfg, {.family = TaskFamily::Attribute}, "head.a.b", 1);
  for (real v : model.store->get("backbone.pos_embed").var.value().data()) CHECK(v == 1.5f);
  Checkpoint empty;
  CHECK_THROWS_AS(discard_projectors(empty.params, cfg, {.family = TaskFamily::Attribute}, "head.a.b", 1),
                  CheckpointError);
}

TEST_CASE("checkpoint round trip is bitwise") {
  ParamStore store(6);
  BackboneConfig cfg{.embed_dim = 8, .depth = 1, .heads = 2};
  VitBackbone bb(cfg, store);
  auto head = make_head({.family = TaskFamily::Counting}, store, "head.counting.c", 8, 2);
  auto& bn = store.batch_norm_states().begin()->second;
  bn.running_mean[3] = -0.25f;
  Checkpoint c = snapshot(store);
  c.metadata = R"({"step": 3})";
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(c, path);
  auto back = load_checkpoint(path);
  CHECK(back.metadata == c.metadata);
  CHECK(diff_names(c, back).empty());
  CHECK(back.batch_norms.size() == c.batch_norms.size());
  CHECK(back.batch_norms.begin()->second.running_mean[3] == -0.25f);

  ParamStore other(7);
  VitBackbone bb2(cfg, other);
  auto head2 = make_head({.family = TaskFamily::Counting}, other, "head.counting.c", 8, 2);
  CHECK_FALSE(diff_names(snapshot(other), c).empty());
  CHECK(restore(other, back).empty());
  CHECK(diff_names(snapshot(other), c).empty());
  CHECK(other.batch_norm_states().begin()->second.running_mean[3] == -0.25f);

  // Corruption is detected.
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << 'x';
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  std::filesystem::resize_file(path, 3);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), CheckpointError);
  std::filesystem::remove(path);
}
