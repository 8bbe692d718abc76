#include "path_engine/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

TrainPlan rescale_schedule(TrainPlan plan, std::int64_t max_iter) {
  if (max_iter < 0) throw ConfigError("max_iter must be non-negative");
  if (plan.max_iter == 0 || max_iter == plan.max_iter) {
    plan.max_iter = max_iter;
    return plan;
  }
  const double ratio = static_cast<double>(max_iter) / static_cast<double>(plan.max_iter);
  plan.warmup_steps = std::llround(static_cast<double>(plan.warmup_steps) * ratio);
  std::vector<std::int64_t> steps;
  std::vector<double> mults;
  for (std::size_t i = 0; i < plan.lr_steps.size(); ++i) {
    const auto s = std::llround(static_cast<double>(plan.lr_steps[i]) * ratio);
    if (s >= max_iter || (!steps.empty() && s <= steps.back())) continue;
    steps.push_back(s);
    mults.push_back(plan.lr_mults[i]);
  }
  plan.lr_steps = std::move(steps);
  plan.lr_mults = std::move(mults);
  plan.max_iter = max_iter;
  return plan;
}

std::string checkpoint_metadata(const ExperimentConfig& config, std::int64_t steps) {
  nlohmann::json j = {{"seed", config.seed}, {"steps", steps}, {"config", nlohmann::json::parse(dump_config(config))}};
  return j.dump();
}

std::string registry_table(Trainer& trainer) {
  std::vector<RegistryRow> rows;
  for (auto* w : trainer.workers())
    for (auto& row : registry_rows(trainer.registry(), w->store()))
      if (std::none_of(rows.begin(), rows.end(), [&](const RegistryRow& x) { return x.name == row.name; }))
        rows.push_back(std::move(row));
  std::sort(rows.begin(), rows.end(), [](const RegistryRow& a, const RegistryRow& b) { return a.name < b.name; });
  return format_registry(rows);
}

ExperimentConfig config_from_metadata(const std::string& metadata) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(metadata);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("config")) throw CheckpointError("checkpoint metadata has no config");
  return parse_config(j["config"].dump());
}

ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed) {
  config.seed = seed;
  config.plan.seed = seed;
  return config;
}

PretrainRun run_pretraining(const ExperimentConfig& config, const PretrainOptions& options) {
  config.validate();
  PretrainRun run;
  run.corpora = prepare_corpora(config);
  Trainer trainer(config.model, config.datasets, config.plan, run.corpora.datasets, config.model.projector.share_type);
  run.registry_table = registry_table(trainer);
  run.result = trainer.run(options);
  run.result.checkpoint.metadata = checkpoint_metadata(config, run.result.steps);
  return run;
}

std::vector<AblationVariant> default_ablation_grid() {
  std::vector<AblationVariant> out;
  for (auto share : {ShareType::All, ShareType::Dataset, ShareType::Task})
    for (bool pos : {false, true}) out.push_back({share, pos});
  return out;
}

AblationTable run_ablation(const ExperimentConfig& config, const AblationOptions& options) {
  if (options.variants.empty()) throw ConfigError("ablation needs at least one variant");
  AblationTable table;
  table.seed = config.seed;
  table.protocol = options.protocol;
  table.pretrain_steps = options.pretrain_steps > 0 ? options.pretrain_steps : config.plan.max_iter;
  for (const auto& v : options.variants) {
    ExperimentConfig c = config;
    c.model.projector.share_type = v.share;
    c.model.pos_embed_shared = v.pos_embed_shared;
    c.plan = rescale_schedule(c.plan, table.pretrain_steps);
    c.evaluation.scenarios = options.scenarios;
    c.evaluation.protocols = {options.protocol};
    c.validate();

    AblationColumn col;
    col.variant = v;
    const auto start = std::chrono::steady_clock::now();
    PretrainOptions po;
    po.contexts = options.contexts;
    const auto run = run_pretraining(c, po);
    col.pretrain_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double sum = 0.0;
    int n = 0;
    for (auto scenario : options.scenarios) {
      col.reports.push_back(run_evaluation(run.result.checkpoint, c, scenario, options.protocol));
      for (const auto& row : col.reports.back().rows)
        if (row.primary().higher_is_better && std::isfinite(row.primary().value)) {
          sum += row.primary().value;
          ++n;
        }
    }
    col.average = n ? sum / n : std::nan("");
    table.columns.push_back(std::move(col));
  }
  return table;
}

namespace {

std::string letter(ShareType t) {
  switch (t) {
    case ShareType::All: return "A";
    case ShareType::Dataset: return "S";
    case ShareType::Task: return "T";
  }
  return "?";
}

std::string pct(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * v;
  return s.str();
}

std::string plain(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << v;
  return s.str();
}

}  // namespace

std::string format_ablation(const AblationTable& t) {
  std::vector<std::vector<std::string>> lines;
  std::vector<std::string> head{"", ""};
  for (std::size_t i = 0; i < t.columns.size(); ++i) head.push_back("(" + std::string(1, char('a' + i)) + ")");
  lines.push_back(head);
  std::vector<std::string> pos{"", "Shared Pos. Embedding"}, share{"", "Projector Share Type"};
  for (const auto& c : t.columns) {
    pos.push_back(c.variant.pos_embed_shared ? "yes" : "");
    share.push_back(letter(c.variant.share));
  }
  lines.push_back(pos);
  lines.push_back(share);
  lines.push_back({});
  if (!t.columns.empty()) {
    const auto& first = t.columns.front();
    for (std::size_t r = 0; r < first.reports.size(); ++r) {
      std::string previous;
      for (std::size_t d = 0; d < first.reports[r].rows.size(); ++d) {
        const auto& row = first.reports[r].rows[d];
        std::string label = row.dataset + " " + row.primary().name;
        if (first.reports[r].scenario == Scenario::OutOfDataset) label += " [out]";
        if (!row.primary().higher_is_better) label += " (lower is better)";
        std::vector<std::string> line{row.task == previous ? "" : row.task, label};
        previous = row.task;
        for (const auto& c : t.columns) {
          const auto& m = c.reports[r].rows[d].primary();
          line.push_back(m.higher_is_better ? pct(m.value) : plain(m.value));
        }
        lines.push_back(line);
      }
    }
  }
  lines.push_back({});
  std::vector<std::string> avg{"", "On average"};
  for (const auto& c : t.columns) avg.push_back(pct(c.average));
  lines.push_back(avg);

  std::vector<std::size_t> width(t.columns.size() + 2, 0);
  for (const auto& l : lines)
    for (std::size_t c = 0; c < l.size(); ++c) width[c] = std::max(width[c], l[c].size());
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  std::ostringstream os;
  os << "ablation: seed " << t.seed << ", " << t.pretrain_steps << " pretraining steps per variant, "
     << to_string(t.protocol) << " finetuning\n";
  for (const auto& l : lines) {
    if (l.empty()) {
      os << std::string(total, '-') << "\n";
      continue;
    }
    for (std::size_t c = 0; c < l.size(); ++c) {
      os << (c >= 2 ? std::right : std::left) << std::setw(static_cast<int>(width[c])) << l[c];
      os << (c == 1 ? " | " : "  ");
    }
    os << "\n";
  }
  return os.str();
}

std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "variant,share_type,shared_pos_embed,seed,scenario,task,dataset,metric,value\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    const auto& c = t.columns[i];
    const std::string id(1, char('a' + i));
    const std::string prefix = id + "," + letter(c.variant.share) + "," + (c.variant.pos_embed_shared ? "true" : "false") +
                               "," + std::to_string(t.seed) + ",";
    for (const auto& r : c.reports)
      for (const auto& row : r.rows)
        os << prefix << to_string(r.scenario) << "," << row.task << "," << row.dataset << "," << row.primary().name << ","
           << row.primary().value << "\n";
    os << prefix << "all,,,average," << c.average << "\n";
  }
  return os.str();
}

}  // namespace path_engine
