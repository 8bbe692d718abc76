#include "suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "grad_suite.hpp"
#include "oracles.hpp"
#include "path_engine/checkpoint.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/eval.hpp"
#include "path_engine/matching.hpp"
#include "path_engine/trainer.hpp"

namespace path_engine::inline PATH_ENGINE_NS::suites {
namespace {

/// Keeps the first failed property and a count of passed ones.
class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) {
      ++passed_;
    } else if (failure_.empty()) {
      failure_ = what;
    }
  }
  bool ok() const { return failure_.empty(); }
  SuiteResult finish(std::string name, const std::string& summary, double seconds) const {
    return {std::move(name), ok(), ok() ? summary : failure_, seconds};
  }
  std::int64_t passed() const { return passed_; }

 private:
  std::string failure_;
  std::int64_t passed_ = 0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

ModelConfig tiny_model(std::int64_t depth) {
  ModelConfig m;
  m.backbone.embed_dim = 16;
  m.backbone.depth = depth;
  m.backbone.heads = 2;
  m.backbone.mlp_ratio = 2;
  m.backbone.canonical_image = 16;
  m.projector.share_type = ShareType::Task;
  return m;
}

DatasetSpec tiny_spec(const std::string& task, const std::string& dataset, TaskFamily family, std::uint64_t seed) {
  DatasetSpec s;
  s.task = task;
  s.dataset = dataset;
  s.family = family;
  s.batch_per_replica = 4;
  s.data.height = 16;
  s.data.width = 16;
  s.data_seed = seed;
  s.num_samples = 32;
  s.head.family = family;
  s.head.num_outputs = family == TaskFamily::Counting ? 1 : default_num_classes(family);
  s.head.hidden = 8;
  return s;
}

TrainPlan tiny_plan(std::int64_t max_iter, std::int64_t depth, std::uint64_t seed) {
  TrainPlan p;
  p.max_iter = max_iter;
  p.warmup_steps = 5;
  p.warmup_lr = 1e-3;
  p.lr_mults = {};
  p.lr_steps = {};
  p.num_layers = depth;
  p.seed = seed;
  return p;
}

std::vector<SyntheticDataset> corpora(const std::vector<DatasetSpec>& specs) {
  std::vector<SyntheticDataset> out;
  for (const auto& s : specs) out.push_back(generate(s.family, s.data_seed, s.num_samples, s.data));
  return out;
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return m;
}

Box random_box(Rng& rng) {
  const double x = rng.uniform(0.0, 0.7), y = rng.uniform(0.0, 0.7);
  return {x, y, x + rng.uniform(0.05, 0.3), y + rng.uniform(0.05, 0.3)};
}

Box jitter(Rng& rng, const Box& b, double s) {
  return {b.x_min + rng.uniform(-s, s), b.y_min + rng.uniform(-s, s), b.x_max + rng.uniform(-s, s),
          b.y_max + rng.uniform(-s, s)};
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

SuiteResult gradcheck(const SuiteOptions& options) {
  const auto start = Clock::now();
  gradsuite::Options o;
  o.seed = options.seed;
  o.inject_fault = options.inject_gradient_bug;
  const auto rows = gradsuite::run_double(o);
  const double seconds = since(start);
  Checker c;
  double worst = 0.0;
  c.require(!rows.empty(), "no gradient cases ran");
  for (const auto& r : rows) {
    c.require(r.passed, "gradient case " + r.name + ": " + r.failure);
    worst = std::max(worst, r.max_rel_error);
  }
  c.require(seconds < 60.0, "gradient suite took " + num(seconds) + " s (limit 60 s)");
  return c.finish("gradcheck", std::to_string(rows.size()) + " cases, max relative error " + num(worst), seconds);
}

SuiteResult sharing_identity(const SuiteOptions& options) {
  const auto start = Clock::now();
  const std::vector<DatasetSpec> specs{tiny_spec("reid", "r1", TaskFamily::ReID, 1),
                                       tiny_spec("reid", "r2", TaskFamily::ReID, 2),
                                       tiny_spec("reid", "r3", TaskFamily::ReID, 3),
                                       tiny_spec("attribute", "a1", TaskFamily::Attribute, 4),
                                       tiny_spec("attribute", "a2", TaskFamily::Attribute, 5)};
  const auto model = tiny_model(2);
  const auto plan = tiny_plan(options.sharing_steps, 2, options.seed);
  Checker c;
  std::int64_t compared = 0;

  Trainer trainer(model, specs, plan, corpora(specs), ShareType::Task);
  const auto& reg = trainer.registry();
  const auto initial = trainer.checkpoint();
  PretrainOptions run;
  run.on_step = [&](std::int64_t step, const std::vector<Worker*>& ws) {
    for (std::size_t w = 0; w < ws.size(); ++w)
      for (const auto* p : std::as_const(ws[w]->store()).parameters()) {
        const auto scope = reg.scope_of(p->name);
        const auto members = reg.sync_set(scope);
        c.require(std::find(members.begin(), members.end(), static_cast<int>(w)) != members.end(),
                  p->name + " held by a worker outside its sync set");
        if (scope.kind == ScopeKind::Dataset) {
          c.require(members.size() == 1, p->name + " is dataset-scoped but shared");
          continue;
        }
        const auto* ref = ws[static_cast<std::size_t>(members.front())]->store().find(p->name);
        c.require(ref != nullptr, p->name + " missing on worker " + std::to_string(members.front()));
        if (!ref) continue;
        c.require(bitwise_equal(p->var.value(), ref->var.value()),
                  p->name + " differs between workers " + std::to_string(members.front()) + " and " +
                      std::to_string(w) + " after step " + std::to_string(step));
        ++compared;
      }
  };
  const auto result = trainer.run(run);
  c.require(result.steps == options.sharing_steps, "run stopped early");

  std::set<std::string> changed;
  for (const auto& n : diff_names(initial, result.checkpoint)) changed.insert(n);
  for (const auto& [name, _] : result.checkpoint.params)
    if (reg.scope_of(name).kind == ScopeKind::Dataset && options.sharing_steps > 0)
      c.require(changed.count(name) != 0, name + " never updated");

  // Changing one worker's data moves that worker's head and no other head.
  for (std::size_t j = 0; j < specs.size(); ++j) {
    auto altered = specs;
    altered[j].data_seed += 100;
    Trainer a(model, specs, tiny_plan(1, 2, options.seed), corpora(specs), ShareType::Task);
    Trainer b(model, altered, tiny_plan(1, 2, options.seed), corpora(altered), ShareType::Task);
    const auto ca = a.run().checkpoint, cb = b.run().checkpoint;
    const std::string own = SharingRegistry::head_prefix(specs[j].task, specs[j].dataset) + ".";
    bool own_moved = false;
    for (const auto& n : diff_names(ca, cb)) {
      if (reg.scope_of(n).kind != ScopeKind::Dataset) continue;
      c.require(starts_with(n, own), n + " changed with the data of worker " + std::to_string(j));
      own_moved = true;
    }
    c.require(own_moved, "head of worker " + std::to_string(j) + " ignores its own data");
  }
  return c.finish("sharing-identity",
                  std::to_string(options.sharing_steps) + " steps, " + std::to_string(compared) +
                      " bitwise comparisons, head ownership per worker",
                  since(start));
}

SuiteResult gating(const SuiteOptions& options) {
  const auto start = Clock::now();
  Checker c;
  ParamStore store(options.seed);
  const std::int64_t taps = 4;
  TaskProjector proj({}, store, "probe", 8, taps, taps + 1);
  for (std::int64_t l = 2; l <= taps; ++l) c.require(proj.gate(l).item() == real(0.5), "gate " + std::to_string(l) + " is not 0.5");
  const double mu = gate_value(Var(Tensor::scalar(real(0.1))), 0.1).item();
  c.require(std::fabs(mu - 0.7310586) < 1e-6, "gate(0.1, T=0.1) = " + num(mu));

  Rng rng(options.seed);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto layers = rng.integer(1, 8);
    std::vector<Var> z, gates;
    for (std::int64_t l = 0; l < layers; ++l) {
      z.emplace_back(uniform_tensor({6}, -10, 10, rng));
      if (l > 0) gates.push_back(gate_value(Var(Tensor::scalar(static_cast<real>(rng.uniform(-2, 2)))), 0.1));
    }
    const auto fused = gate_fuse(z, gates);
    for (std::int64_t i = 0; i < 6; ++i) {
      real lo = z[0].value()[i], hi = lo;
      for (const auto& v : z) {
        lo = std::min(lo, v.value()[i]);
        hi = std::max(hi, v.value()[i]);
      }
      c.require(fused.value()[i] >= lo && fused.value()[i] <= hi,
                "fused value outside the envelope in trial " + std::to_string(trial));
    }
  }
  return c.finish("gating", "initial gates 0.5, temperature example, 1000 envelope trials", since(start));
}

SuiteResult schedule_constants(const SuiteOptions&) {
  const auto start = Clock::now();
  Checker c;
  auto weight = [](double sample_weight, std::int64_t batch, std::int64_t replicas) {
    DatasetSpec s;
    s.sample_weight = sample_weight;
    s.batch_per_replica = batch;
    s.replicas = replicas;
    return loss_weight(s);
  };
  c.require(weight(224, 2, 8000) == 3584000.0, "pose loss weight");
  c.require(weight(2, 16, 10) == 320.0, "detection loss weight");
  c.require(weight(112, 1, 5) == 560.0, "reid loss weight");
  const TrainPlan plan;
  c.require(lr_at(0, plan) == 1e-7, "lr(0) = " + num(lr_at(0, plan)));
  c.require(lr_at(1500, plan) == 5e-4, "lr(1500) = " + num(lr_at(1500, plan)));
  for (std::int64_t s = 40000; s < 60000; s += 997)
    c.require(lr_at(s, plan) == 2.5e-4, "lr(" + std::to_string(s) + ") = " + num(lr_at(s, plan)));
  c.require(lr_at(59999, plan) == 2.5e-4, "lr(59999) = " + num(lr_at(59999, plan)));
  return c.finish("schedule-constants", "loss weights 3584000/320/560, lr 1e-7 / 5e-4 / 2.5e-4", since(start));
}

SuiteResult freeze_semantics(const SuiteOptions& options) {
  const auto start = Clock::now();
  Checker c;
  const std::int64_t depth = 4;
  ExperimentConfig config;
  config.seed = options.seed;
  config.model = tiny_model(depth);
  config.plan = tiny_plan(0, depth, options.seed);
  config.datasets = {tiny_spec("attribute", "a1", TaskFamily::Attribute, 3)};
  config.evaluation.steps = options.freeze_steps;
  config.evaluation.batch_size = 8;
  config.evaluation.train_samples = 64;
  config.evaluation.test_samples = 32;
  config.evaluation.unseen = tiny_spec("counting", "crowd", TaskFamily::Counting, 9);
  config.evaluation.transfer_dataset = "a1";
  config.validate();

  const auto pretrained = random_backbone(config, options.seed);
  const auto target = eval_targets(config, Scenario::InDataset).front();
  const auto splits = make_splits(target, config.evaluation);
  std::vector<std::string> last_blocks;
  for (std::int64_t b = depth - config.evaluation.partial_k + 1; b <= depth; ++b)
    last_blocks.push_back(VitBackbone::block_prefix(b));

  for (auto protocol : {Protocol::HeadFt, Protocol::PartialFt, Protocol::FullFt}) {
    auto model = build_eval_model(pretrained, config, target, options.seed);
    const std::string head = model.head_prefix + ".";
    const auto r = finetune(model, target, splits, protocol, config, options.seed);
    const std::string tag = to_string(protocol) + ": ";
    c.require(static_cast<std::int64_t>(r.losses.size()) == options.freeze_steps, tag + "wrong step count");
    bool head_moved = false, backbone_moved = false;
    std::set<std::string> blocks_moved;
    for (const auto& n : diff_names(r.before, r.after)) {
      if (starts_with(n, head)) {
        head_moved = true;
        continue;
      }
      backbone_moved = true;
      const auto in_block = std::find_if(last_blocks.begin(), last_blocks.end(),
                                         [&](const std::string& p) { return starts_with(n, p); });
      if (in_block != last_blocks.end()) blocks_moved.insert(*in_block);
      if (protocol == Protocol::HeadFt) c.require(false, tag + n + " changed");
      if (protocol == Protocol::PartialFt) c.require(in_block != last_blocks.end(), tag + n + " changed");
    }
    c.require(head_moved, tag + "head never updated");
    if (protocol == Protocol::PartialFt)
      c.require(blocks_moved.size() == last_blocks.size(), tag + "a trainable block never updated");
    if (protocol == Protocol::FullFt) c.require(backbone_moved, tag + "backbone never updated");
    c.require(!r.optimizer_states.empty(), tag + "no optimizer state");
    for (const auto& [name, state] : r.optimizer_states) {
      if (protocol == Protocol::FullFt) continue;
      c.require(state.weight_decay == 0.0, tag + name + " has weight decay " + num(state.weight_decay));
    }
    if (protocol == Protocol::FullFt)
      c.require(std::any_of(r.optimizer_states.begin(), r.optimizer_states.end(),
                            [](const auto& e) { return e.second.weight_decay > 0.0; }),
                tag + "weight decay missing under full finetuning");
  }
  return c.finish("freeze-semantics", std::to_string(options.freeze_steps) + " steps each of head, partial (K=" +
                                          std::to_string(config.evaluation.partial_k) + ") and full finetuning",
                  since(start));
}

SuiteResult metric_oracles(const SuiteOptions& options) {
  const auto start = Clock::now();
  Checker c;
  const double tol = 1e-9;
  const int trials = options.oracle_trials;
  Rng rng(options.seed);

  for (int t = 0; t < trials; ++t) {
    const auto ng = static_cast<std::size_t>(rng.integer(2, 20));
    const auto nq = static_cast<std::size_t>(rng.integer(1, 6));
    const auto gallery = random_matrix(rng, ng, 4), query = random_matrix(rng, nq, 4);
    std::vector<int> gid(ng), qid(nq);
    for (auto& g : gid) g = static_cast<int>(rng.integer(0, 3));
    for (auto& q : qid) q = static_cast<int>(rng.integer(0, 3));
    const auto s = reid_map_top1(query, qid, gallery, gid);
    c.require(std::fabs(s.map - oracle::reid_map(query, qid, gallery, gid)) <= tol, "mAP trial " + std::to_string(t));
    c.require(std::fabs(s.top1 - oracle::reid_top1(query, qid, gallery, gid)) <= tol,
              "Top1 trial " + std::to_string(t));
  }
  for (int t = 0; t < trials; ++t) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 20));
    const int classes = static_cast<int>(rng.integer(1, 5));
    std::vector<int> pred(n), gt(n);
    for (auto& v : pred) v = static_cast<int>(rng.integer(0, classes - 1));
    for (auto& v : gt) v = static_cast<int>(rng.integer(0, classes - 1));
    const auto s = miou_pacc(pred, gt, classes);
    c.require(std::fabs(s.miou - oracle::miou(pred, gt, classes)) <= tol, "mIoU trial " + std::to_string(t));
  }
  for (int t = 0; t < trials; ++t) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 20));
    const auto a = static_cast<std::size_t>(rng.integer(1, 6));
    Matrix probs(n, std::vector<double>(a)), truth(n, std::vector<double>(a));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < a; ++j) {
        probs[i][j] = rng.uniform();
        truth[i][j] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
    c.require(std::fabs(attribute_ma(probs, truth).ma - oracle::mean_accuracy(probs, truth)) <= tol,
              "mA trial " + std::to_string(t));
  }
  for (int t = 0; t < trials; ++t) {
    const auto b = rng.integer(1, 3), k = rng.integer(1, 4), h = rng.integer(2, 5), w = rng.integer(2, 5);
    const auto maps = uniform_tensor({b, k, h, w}, 0.0, 1.0, rng);
    std::vector<std::vector<Keypoint>> truth(static_cast<std::size_t>(b), std::vector<Keypoint>(static_cast<std::size_t>(k)));
    for (auto& s : truth)
      for (auto& p : s) p = {rng.uniform(0.0, double(w)), rng.uniform(0.0, double(h))};
    for (double thr : {0.5, 1.0, 2.0})
      c.require(std::fabs(pose_pck_epe(maps, truth, thr).pck - oracle::pck(maps, truth, thr)) <= tol,
                "PCK trial " + std::to_string(t));
  }
  int ap_trials = 0;
  while (ap_trials < trials) {
    const auto images = static_cast<std::size_t>(rng.integer(1, 3));
    std::vector<std::vector<Box>> gt(images);
    std::vector<std::vector<Detection>> det(images);
    std::size_t count = 0;
    for (std::size_t i = 0; i < images; ++i) {
      const auto ng = rng.integer(0, 3);
      for (std::int64_t j = 0; j < ng; ++j) gt[i].push_back(random_box(rng));
      const auto nd = rng.integer(0, 5);
      for (std::int64_t j = 0; j < nd && count < 20; ++j, ++count) {
        const Box box = !gt[i].empty() && rng.bernoulli(0.7)
                            ? jitter(rng, gt[i][static_cast<std::size_t>(rng.integer(0, ng - 1))], 0.05)
                            : random_box(rng);
        det[i].push_back({box, rng.uniform(), 0});
      }
    }
    const auto got = average_precision_50(det, gt);
    const auto want = oracle::ap50(det, gt);
    c.require(got.has_value() == want.has_value(), "AP50 definedness trial " + std::to_string(ap_trials));
    if (!want) continue;
    c.require(got && std::fabs(*got - *want) <= tol, "AP50 trial " + std::to_string(ap_trials));
    ++ap_trials;
  }

  c.require(std::fabs(giou({0, 0, 1, 1}, {2, 2, 3, 3}) - (-7.0 / 9.0)) < 1e-4, "GIoU disjoint example");
  c.require(std::fabs(giou({0, 0, 2, 2}, {1, 1, 3, 3}) - (-0.0794)) < 1e-4, "GIoU overlap example");

  int assignments = 0;
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = rows; cols <= 6; ++cols)
      for (int t = 0; t < 10; ++t, ++assignments) {
        std::vector<std::vector<double>> cost(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
        for (auto& r : cost)
          for (auto& v : r) v = rng.uniform(0, 10);
        c.require(std::fabs(hungarian(cost).cost - oracle::assignment_cost(cost)) <= tol,
                  "Hungarian " + std::to_string(rows) + "x" + std::to_string(cols));
      }
  return c.finish("metric-oracles",
                  std::to_string(trials) + " instances each of mAP/Top1, mIoU, mA, PCK, AP50; GIoU examples; " +
                      std::to_string(assignments) + " assignments up to 6x6",
                  since(start));
}

SuiteResult dedup_oracle(const SuiteOptions& options) {
  const auto start = Clock::now();
  Checker c;
  DataConfig cfg;
  auto pretrain = generate(TaskFamily::Parsing, options.seed, 1000, cfg);
  const auto eval = generate(TaskFamily::Parsing, options.seed, 100, cfg, 1000, Split::InEval);
  Rng rng(derive_seed(options.seed, "plant"));
  std::set<std::size_t> planted;
  while (planted.size() < 10) planted.insert(static_cast<std::size_t>(rng.integer(0, 999)));
  std::size_t e = 0;
  for (auto at : planted) pretrain.samples[at] = eval.samples[(e++ * 7) % eval.size()];

  const auto result = dedup(pretrain, eval);
  const std::vector<std::size_t> expected(planted.begin(), planted.end());
  c.require(result.removed == expected, std::to_string(result.removed.size()) + " removals instead of the 10 planted");
  std::vector<HashCode> pc, ec;
  for (const auto& s : pretrain.samples) pc.push_back(dhash(s.image));
  for (const auto& s : eval.samples) ec.push_back(dhash(s.image));
  c.require(oracle::duplicates(pc, ec) == result.removed, "pairwise oracle disagrees");
  c.require(result.kept.size() == 990, "kept " + std::to_string(result.kept.size()) + " of 1000");
  return c.finish("dedup-oracle", "10 planted in 1000, 10 removed, pairwise oracle agrees", since(start));
}

std::vector<Suite> all_suites() {
  return {{"gradcheck", gradcheck},
          {"sharing-identity", sharing_identity},
          {"gating", gating},
          {"schedule-constants", schedule_constants},
          {"freeze-semantics", freeze_semantics},
          {"metric-oracles", metric_oracles},
          {"dedup-oracle", dedup_oracle}};
}

}  // namespace path_engine::suites
