#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "path_engine/checkpoint.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/experiment.hpp"
#include "path_engine/kernels.hpp"
#include "suites.hpp"

namespace fs = std::filesystem;
using namespace path_engine;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

/// --seed, then PATH_ENGINE_SEED, then the config's own seed.
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("PATH_ENGINE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("PATH_ENGINE_SEED is not an unsigned integer: ") + env);
  }
  return std::nullopt;
}

ExperimentConfig resolve(ExperimentConfig config, const std::optional<std::uint64_t>& flag) {
  if (auto s = seed_override(flag)) config = with_seed(std::move(config), *s);
  config.validate();
  return config;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Appends rows, writing the header only into a new file.
void append_csv(const fs::path& path, const std::string& header, const std::string& rows) {
  const bool fresh = !fs::exists(path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  if (fresh) out << header;
  out << rows;
}

struct PretrainArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  fs::path out = "runs/pretrain";
  int workers = 1;
  std::int64_t steps = -1;
};

int cmd_pretrain(const PretrainArgs& a) {
  auto config = resolve(load_config(a.config), a.seed);
  if (a.steps >= 0) config.plan = rescale_schedule(config.plan, a.steps);
  fs::create_directories(a.out);
  PretrainOptions options;
  options.contexts = a.workers;
  options.log_path = a.out / "train_log.csv";
  const auto every = std::max<std::int64_t>(1, config.plan.max_iter / 10);
  options.on_step = [&](std::int64_t step, const std::vector<Worker*>&) {
    if ((step + 1) % every == 0 || step + 1 == config.plan.max_iter)
      std::cerr << "step " << step + 1 << "/" << config.plan.max_iter << "\n";
  };
  std::cout << "pretraining " << config.datasets.size() << " datasets, " << config.plan.max_iter
            << " steps, seed " << config.seed << "\n";
  const auto run = run_pretraining(config, options);
  save_checkpoint(run.result.checkpoint, a.out / "checkpoint.ckpt");
  write_file(a.out / "config.json", dump_config(config) + "\n");
  write_file(a.out / "registry.txt", run.registry_table);

  std::map<std::string, std::vector<double>> losses;
  for (const auto& row : run.result.log) losses[row.dataset].push_back(row.loss);
  std::cout << std::left << std::setw(16) << "dataset" << std::right << std::setw(10) << "removed" << std::setw(12)
            << "first loss" << std::setw(12) << "last loss" << "\n";
  for (std::size_t i = 0; i < config.datasets.size(); ++i) {
    const auto& name = config.datasets[i].dataset;
    const auto& v = losses[name];
    std::cout << std::left << std::setw(16) << name << std::right << std::setw(10)
              << run.corpora.dedup[i].removed.size() << std::setw(12) << (v.empty() ? 0.0 : v.front())
              << std::setw(12) << (v.empty() ? 0.0 : v.back()) << "\n";
  }
  std::cout << "wrote " << (a.out / "checkpoint.ckpt").string() << " and " << options.log_path.string() << " ("
            << run.result.seconds << " s)\n";
  return 0;
}

ExperimentConfig eval_config(const Checkpoint& ckpt, const fs::path& config_path,
                             const std::optional<std::uint64_t>& seed) {
  return resolve(config_path.empty() ? config_from_metadata(ckpt.metadata) : load_config(config_path), seed);
}

struct EvaluateArgs {
  fs::path checkpoint;
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::string protocol = "full";
  std::string scenario = "in";
  std::int64_t eval_steps = -1;
  fs::path csv;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto protocol = parse_protocol(a.protocol);
  const auto scenario = parse_scenario(a.scenario);
  const auto ckpt = load_checkpoint(a.checkpoint);
  auto config = eval_config(ckpt, a.config, a.seed);
  if (a.eval_steps >= 0) config.evaluation.steps = a.eval_steps;
  const auto report = run_evaluation(ckpt, config, scenario, protocol);
  std::cout << format_report(report);
  const fs::path csv = a.csv.empty() ? a.checkpoint.parent_path() / "eval.csv" : a.csv;
  append_csv(csv, report_csv_header(), report_csv(report));
  std::cout << "appended " << csv.string() << "\n";
  return 0;
}

struct TransferArgs {
  fs::path checkpoint;
  fs::path config;
  std::optional<std::uint64_t> seed;
};

int cmd_transfer(const TransferArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto config = eval_config(ckpt, a.config, a.seed);
  const auto report = transfer_test(ckpt, config);
  std::cout << "head finetuning on " << report.target << " (" << report.metric << "), frozen backbones\n";
  int wins = 0;
  for (const auto& t : report.trials) {
    std::cout << "  seed " << t.seed << ": pretrained " << t.pretrained << ", random " << t.random
              << (t.pretrained_better() ? "  pretrained better" : "  random better or equal") << "\n";
    wins += t.pretrained_better();
  }
  std::cout << wins << "/" << report.trials.size() << " seeds favour the pretrained backbone\n";
  return 0;
}

struct AblateArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> share_types;
  std::vector<std::string> pos_embed;
  std::int64_t steps = 0;
  std::string protocol = "full";
  std::vector<std::string> scenarios{"in", "out"};
  std::int64_t eval_steps = -1;
  int workers = 1;
  fs::path csv;
};

int cmd_ablate(const AblateArgs& a) {
  auto config = resolve(load_config(a.config), a.seed);
  if (a.eval_steps >= 0) config.evaluation.steps = a.eval_steps;
  AblationOptions options;
  options.pretrain_steps = a.steps;
  options.protocol = parse_protocol(a.protocol);
  options.contexts = a.workers;
  options.scenarios.clear();
  for (const auto& s : a.scenarios) options.scenarios.push_back(parse_scenario(s));
  std::vector<ShareType> shares;
  for (const auto& s : a.share_types) shares.push_back(parse_share_type(s));
  if (shares.empty()) shares = {ShareType::All, ShareType::Dataset, ShareType::Task};
  std::vector<bool> pos;
  for (const auto& p : a.pos_embed) pos.push_back(p == "shared");
  if (pos.empty()) pos = {false, true};
  options.variants.clear();
  for (auto s : shares)
    for (bool p : pos) options.variants.push_back({s, p});
  const auto table = run_ablation(config, options);
  std::cout << format_ablation(table);
  if (!a.csv.empty()) {
    write_file(a.csv, ablation_csv(table));
    std::cout << "wrote " << a.csv.string() << "\n";
  }
  return 0;
}

struct VerifyArgs {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> only;
  bool inject_gradient_bug = false;
};

int cmd_verify(const VerifyArgs& a) {
  suites::SuiteOptions options;
  if (auto s = seed_override(a.seed)) options.seed = *s;
  options.inject_gradient_bug = a.inject_gradient_bug;
  std::optional<suites::SuiteResult> first_failure;
  for (const auto& suite : suites::all_suites()) {
    if (!a.only.empty() && std::find(a.only.begin(), a.only.end(), suite.name) == a.only.end()) continue;
    suites::SuiteResult r;
    try {
      r = suite.run(options);
    } catch (const std::exception& e) {
      r = {suite.name, false, std::string("threw: ") + e.what(), 0.0};
    }
    std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(20) << r.name << std::right
              << std::fixed << std::setprecision(1) << std::setw(7) << r.seconds << " s  " << r.detail << "\n"
              << std::defaultfloat;
    if (!r.passed && !first_failure) first_failure = r;
  }
  if (first_failure) {
    std::cout << "first failing property: " << first_failure->name << ": " << first_failure->detail << "\n";
    return kRuntimeFailure;
  }
  return 0;
}

int cmd_registry(const fs::path& config_path, const std::optional<std::uint64_t>& seed) {
  const auto config = resolve(load_config(config_path), seed);
  std::vector<SyntheticDataset> data;
  for (const auto& s : config.datasets) data.push_back(generate(s.family, s.data_seed, s.num_samples, s.data));
  Trainer trainer(config.model, config.datasets, config.plan, data, config.model.projector.share_type);
  std::cout << registry_table(trainer);
  return 0;
}

struct ExportArgs {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> datasets;
  std::string split = "pretrain";
  fs::path out = "runs/data";
};

int cmd_export(const ExportArgs& a) {
  const auto config = resolve(load_config(a.config), a.seed);
  auto wanted = [&](const std::string& name) {
    return a.datasets.empty() || std::find(a.datasets.begin(), a.datasets.end(), name) != a.datasets.end();
  };
  std::size_t written = 0;
  if (a.split == "pretrain") {
    const auto corpora = prepare_corpora(config);
    for (std::size_t i = 0; i < config.datasets.size(); ++i) {
      if (!wanted(config.datasets[i].dataset)) continue;
      const auto dir = a.out / config.datasets[i].dataset / "pretrain";
      export_dataset(corpora.datasets[i], dir);
      std::cout << dir.string() << ": " << corpora.datasets[i].size() << " samples\n";
      ++written;
    }
  } else {
    for (const auto& t : eval_targets(config, parse_scenario(a.split))) {
      if (!wanted(t.spec.dataset)) continue;
      const auto splits = make_splits(t, config.evaluation);
      const auto base = a.out / t.spec.dataset / a.split;
      export_dataset(splits.train, base / "train");
      export_dataset(splits.test, base / "test");
      std::cout << base.string() << ": " << splits.train.size() << " train, " << splits.test.size() << " test\n";
      ++written;
    }
  }
  if (written == 0) throw ConfigError("no dataset matched the selection");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task pretraining engine with task projectors and hierarchical sharing"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "OpenMP threads per kernel")->check(CLI::PositiveNumber);

  const std::vector<std::string> protocols{"head", "partial", "full"};
  const std::vector<std::string> scenarios{"in", "out", "unseen"};

  PretrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "Run multi-worker pretraining");
  pretrain->add_option("--config", pa.config, "Experiment config (JSON)")->required();
  pretrain->add_option("--seed", pa.seed, "Overrides PATH_ENGINE_SEED and the config seed");
  pretrain->add_option("--out", pa.out, "Output directory")->capture_default_str();
  pretrain->add_option("--workers", pa.workers, "Execution contexts for the simulated workers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pretrain->add_option("--steps", pa.steps, "Pretraining steps; the schedule is rescaled")
      ->check(CLI::NonNegativeNumber);

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Finetune and score a pretrained checkpoint");
  evaluate->add_option("--checkpoint", ea.checkpoint, "Checkpoint written by pretrain")->required();
  evaluate->add_option("--config", ea.config, "Config; defaults to the one recorded in the checkpoint");
  evaluate->add_option("--seed", ea.seed, "Overrides PATH_ENGINE_SEED and the config seed");
  evaluate->add_option("--protocol", ea.protocol, "head | partial | full")
      ->check(CLI::IsMember(protocols))
      ->capture_default_str();
  evaluate->add_option("--scenario", ea.scenario, "in | out | unseen")
      ->check(CLI::IsMember(scenarios))
      ->capture_default_str();
  evaluate->add_option("--eval-steps", ea.eval_steps, "Finetuning steps (default: config)")
      ->check(CLI::NonNegativeNumber);
  evaluate->add_option("--csv", ea.csv, "Append-only results CSV (default: eval.csv next to the checkpoint)");

  TransferArgs ta;
  auto* transfer = app.add_subcommand("transfer", "Pretrained versus random frozen backbone on a held-out dataset");
  transfer->add_option("--checkpoint", ta.checkpoint, "Checkpoint written by pretrain")->required();
  transfer->add_option("--config", ta.config, "Config; defaults to the one recorded in the checkpoint");
  transfer->add_option("--seed", ta.seed, "Overrides PATH_ENGINE_SEED and the config seed");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Matched pretrain and evaluate per sharing variant");
  ablate->add_option("--config", aa.config, "Experiment config (JSON)")->required();
  ablate->add_option("--seed", aa.seed, "Common seed of every variant");
  ablate->add_option("--share-type", aa.share_types, "A | S | T, repeatable (default all)")
      ->check(CLI::IsMember({"A", "S", "T"}));
  ablate->add_option("--pos-embed", aa.pos_embed, "shared | separate, repeatable (default both)")
      ->check(CLI::IsMember({"shared", "separate"}));
  ablate->add_option("--steps", aa.steps, "Pretraining steps per variant (default: config)")
      ->check(CLI::NonNegativeNumber);
  ablate->add_option("--eval-steps", aa.eval_steps, "Finetuning steps per evaluation (default: config)")
      ->check(CLI::NonNegativeNumber);
  ablate->add_option("--protocol", aa.protocol, "head | partial | full")
      ->check(CLI::IsMember(protocols))
      ->capture_default_str();
  ablate->add_option("--scenario", aa.scenarios, "in | out | unseen, repeatable")
      ->check(CLI::IsMember(scenarios))
      ->capture_default_str();
  ablate->add_option("--workers", aa.workers, "Execution contexts for the simulated workers")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--csv", aa.csv, "Write the comparison as CSV");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run every property suite");
  verify->add_option("--seed", va.seed, "Seed of the randomized suites");
  std::vector<std::string> suite_names;
  for (const auto& s : suites::all_suites()) suite_names.push_back(s.name);
  verify->add_option("--suite", va.only, "Run only these suites")->check(CLI::IsMember(suite_names));
  verify->add_flag("--inject-gradient-bug", va.inject_gradient_bug, "Negative control for the gradient suite");

  fs::path registry_config;
  std::optional<std::uint64_t> registry_seed;
  auto* registry = app.add_subcommand("registry", "Print every parameter with its scope and sync set");
  registry->add_option("--config", registry_config, "Experiment config (JSON)")->required();
  registry->add_option("--seed", registry_seed, "Overrides PATH_ENGINE_SEED and the config seed");

  ExportArgs xa;
  auto* export_data = app.add_subcommand("export-data", "Write synthetic datasets to disk");
  export_data->add_option("--config", xa.config, "Experiment config (JSON)")->required();
  export_data->add_option("--seed", xa.seed, "Overrides PATH_ENGINE_SEED and the config seed");
  export_data->add_option("--dataset", xa.datasets, "Dataset names, repeatable (default all)");
  export_data->add_option("--split", xa.split, "pretrain | in | out | unseen")
      ->check(CLI::IsMember({"pretrain", "in", "out", "unseen"}))
      ->capture_default_str();
  export_data->add_option("--out", xa.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    kernels::set_num_threads(threads);
    if (*pretrain) return cmd_pretrain(pa);
    if (*evaluate) return cmd_evaluate(ea);
    if (*transfer) return cmd_transfer(ta);
    if (*ablate) return cmd_ablate(aa);
    if (*verify) return cmd_verify(va);
    if (*registry) return cmd_registry(registry_config, registry_seed);
    if (*export_data) return cmd_export(xa);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}
