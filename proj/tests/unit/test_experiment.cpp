#include <set>
#include <sstream>

#include "experiment_fixture.hpp"
#include "helpers.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/experiment.hpp"

using namespace test;

namespace {

bool same_params(const Checkpoint& a, const Checkpoint& b) {
  if (a.params.size() != b.params.size()) return false;
  for (const auto& [name, t] : a.params)
    if (!b.params.count(name) || !bitwise_equal(t, b.params.at(name))) return false;
  return true;
}

}  // namespace

TEST_CASE("rescaling the reference schedule to 2000 steps") {
  const auto p = rescale_schedule(TrainPlan{}, 2000);
  CHECK(p.max_iter == 2000);
  CHECK(p.warmup_steps == 38);
  CHECK(p.lr_steps == std::vector<std::int64_t>{1000, 1500, 1900});
  CHECK(p.lr_mults == std::vector<double>{0.5, 0.2, 0.1});
  CHECK(p.warmup_lr == TrainPlan{}.warmup_lr);
  CHECK(lr_at(1200, p) == doctest::Approx(0.5 * p.warmup_lr));
}

TEST_CASE("rescaling drops milestones that collapse or fall off the end") {
  const auto p = rescale_schedule(TrainPlan{}, 3);
  for (std::size_t i = 0; i < p.lr_steps.size(); ++i) {
    CHECK(p.lr_steps[i] < 3);
    if (i) CHECK(p.lr_steps[i] > p.lr_steps[i - 1]);
  }
  CHECK(p.lr_steps.size() == p.lr_mults.size());
  CHECK(rescale_schedule(TrainPlan{}, 80000) == TrainPlan{});
  CHECK_THROWS_AS(rescale_schedule(TrainPlan{}, -1), ConfigError);
}

TEST_CASE("with_seed replaces both seeds") {
  const auto c = with_seed(tiny_experiment(3), 17);
  CHECK(c.seed == 17);
  CHECK(c.plan.seed == 17);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("checkpoint metadata records the resolved config") {
  const auto c = tiny_experiment();
  const auto meta = checkpoint_metadata(c, 3);
  CHECK(config_from_metadata(meta) == c);
  CHECK_THROWS_AS(config_from_metadata("{}"), CheckpointError);
  CHECK_THROWS_AS(config_from_metadata("not json"), CheckpointError);
}

TEST_CASE("pretraining is a function of the seed") {
  const auto c = tiny_experiment(3);
  const auto a = run_pretraining(c);
  const auto b = run_pretraining(c);
  const auto other = run_pretraining(with_seed(c, 4));
  CHECK(same_params(a.result.checkpoint, b.result.checkpoint));
  CHECK_FALSE(same_params(a.result.checkpoint, other.result.checkpoint));
  CHECK(a.result.steps == c.plan.max_iter);
  CHECK(a.result.log.size() == c.datasets.size() * static_cast<std::size_t>(c.plan.max_iter));
  CHECK(config_from_metadata(a.result.checkpoint.metadata) == c);
  CHECK(a.registry_table == b.registry_table);
  for (const auto& d : c.datasets)
    CHECK(a.registry_table.find(SharingRegistry::head_prefix(d.task, d.dataset)) != std::string::npos);
}

TEST_CASE("the default ablation grid crosses share types with positional embedding") {
  const auto grid = default_ablation_grid();
  REQUIRE(grid.size() == 6);
  std::set<std::pair<int, bool>> seen;
  for (const auto& v : grid) seen.insert({static_cast<int>(v.share), v.pos_embed_shared});
  CHECK(seen.size() == 6);
}

TEST_CASE("ablation runs matched variants and writes one column each") {
  const auto c = tiny_experiment(5);
  AblationOptions o;
  o.variants = {{ShareType::All, true}, {ShareType::Task, false}};
  o.pretrain_steps = 2;
  o.scenarios = {Scenario::InDataset};
  const auto t = run_ablation(c, o);
  CHECK(t.seed == 5);
  CHECK(t.pretrain_steps == 2);
  REQUIRE(t.columns.size() == 2);
  for (const auto& col : t.columns) {
    REQUIRE(col.reports.size() == 1);
    CHECK(col.reports[0].rows.size() == c.datasets.size());
    CHECK(col.reports[0].seed == 5);
  }
  CHECK(t.columns[0].variant == o.variants[0]);

  const auto text = format_ablation(t);
  CHECK(text.rfind("ablation: seed 5, 2 pretraining steps", 0) == 0);
  CHECK(text.find("Projector Share Type") != std::string::npos);
  CHECK(text.find("On average") != std::string::npos);

  std::istringstream csv(ablation_csv(t));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "variant,share_type,shared_pos_embed,seed,scenario,task,dataset,metric,value");
  std::set<std::string> prefixes;
  for (std::string l; std::getline(csv, l);) prefixes.insert(l.substr(0, l.find(",5,")));
  CHECK(prefixes == std::set<std::string>{"a,A,true", "b,T,false"});

  o.variants.clear();
  CHECK_THROWS_AS(run_ablation(c, o), ConfigError);
}
