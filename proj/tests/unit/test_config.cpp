#include <filesystem>
#include <fstream>

#include "experiment_fixture.hpp"
#include "helpers.hpp"
#include "json.hpp"
#include "path_engine/errors.hpp"

using namespace test;
using nlohmann::json;

namespace {

ExperimentConfig reparse(const json& j) { return parse_config(j.dump()); }

}  // namespace

TEST_CASE("desk config loads and validates") {
  const auto c = load_config(PATH_ENGINE_DESK_CONFIG);
  CHECK_NOTHROW(c.validate());
  CHECK(c.datasets.size() == 5);
  CHECK(c.plan.max_iter <= 3000);
  CHECK(c.plan.seed == c.seed);
  CHECK(c.model.backbone.patch_size == 4);
  CHECK(c.model.backbone.embed_dim == 32);
  CHECK(c.model.backbone.depth == 4);
  CHECK(c.evaluation.unseen.family == TaskFamily::Counting);
}

TEST_CASE("load, dump, load yields an identical configuration") {
  for (const auto& c : {load_config(PATH_ENGINE_DESK_CONFIG), tiny_experiment()}) {
    const auto once = parse_config(dump_config(c));
    CHECK(once == c);
    CHECK(dump_config(once) == dump_config(c));
  }
}

TEST_CASE("unknown keys are rejected at every level") {
  const auto base = json::parse(dump_config(tiny_experiment()));
  auto top = base;
  top["sed"] = 1;
  CHECK_THROWS_AS(reparse(top), ConfigError);
  auto nested = base;
  nested["backbone"]["depht"] = 3;
  CHECK_THROWS_AS(reparse(nested), ConfigError);
  auto in_dataset = base;
  in_dataset["datasets"][0]["head"]["hiden"] = 4;
  CHECK_THROWS_AS(reparse(in_dataset), ConfigError);
  auto in_eval = base;
  in_eval["evaluation"]["unseen"]["data"]["hieght"] = 16;
  CHECK_THROWS_AS(reparse(in_eval), ConfigError);
  CHECK_NOTHROW(reparse(base));
}

TEST_CASE("omitted keys keep defaults and dataset defaults are derived") {
  const auto c = parse_config(
      R"({"layer_decay": {"num_layers": 4}, "datasets": [{"family": "attribute", "dataset": "pa"}]})");
  CHECK(c.datasets.at(0).task == "attribute");
  CHECK(c.datasets.at(0).head.num_outputs == default_num_classes(TaskFamily::Attribute));
  CHECK(c.plan.max_iter == TrainPlan{}.max_iter);
  CHECK(c.plan.num_layers == c.model.backbone.depth);
  CHECK_THROWS_AS(parse_config(R"({"datasets": [{"family": "attribute"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"datasets": [{"family": "faces", "dataset": "x"}]})"), ConfigError);
}

TEST_CASE("value errors are config errors") {
  const auto base = json::parse(dump_config(tiny_experiment()));
  auto bad_type = base;
  bad_type["backbone"]["depth"] = "three";
  CHECK_THROWS_AS(reparse(bad_type), ConfigError);
  auto schedule = base;
  schedule["lr_schedule"]["type"] = "Cosine";
  CHECK_THROWS_AS(reparse(schedule), ConfigError);
  auto relative = base;
  relative["optimizer"]["relative_step"] = true;
  CHECK_THROWS_AS(reparse(relative), ConfigError);
  auto share = base;
  share["projector"]["share_type"] = "X";
  CHECK_THROWS_AS(reparse(share), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("cross-module invariants are checked by validate") {
  auto c = tiny_experiment();
  CHECK_NOTHROW(c.validate());
  auto depth = c;
  depth.plan.num_layers = 5;
  CHECK_THROWS_AS(depth.validate(), ConfigError);
  auto seeds = c;
  seeds.plan.seed = c.seed + 1;
  CHECK_THROWS_AS(seeds.validate(), ConfigError);
  auto odd = c;
  odd.datasets[0].batch_per_replica = 3;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
  auto patch = c;
  patch.datasets[1].data.width = 18;
  CHECK_THROWS_AS(patch.validate(), ConfigError);
  auto unseen = c;
  unseen.evaluation.unseen = tiny_dataset("attribute", "held", TaskFamily::Attribute, 4);
  CHECK_THROWS_AS(unseen.validate(), ConfigError);
  auto transfer = c;
  transfer.evaluation.transfer_dataset = "missing";
  CHECK_THROWS_AS(transfer.validate(), ConfigError);
  auto k = c;
  k.evaluation.partial_k = 4;
  CHECK_THROWS_AS(k.validate(), ConfigError);
}

TEST_CASE("scenario names") {
  for (auto s : {Scenario::InDataset, Scenario::OutOfDataset, Scenario::UnseenTask})
    CHECK(parse_scenario(to_string(s)) == s);
  CHECK(to_string(Scenario::UnseenTask) == "unseen");
  CHECK_THROWS_AS(parse_scenario("sideways"), ConfigError);
}
