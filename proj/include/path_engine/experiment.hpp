#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "path_engine/eval.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

/// Same schedule over `max_iter` steps: warmup and lr_steps scaled by
/// max_iter / plan.max_iter, multipliers kept.
TrainPlan rescale_schedule(TrainPlan plan, std::int64_t max_iter);

struct PretrainRun {
  PretrainResult result;
  PreparedCorpora corpora;
  std::string registry_table;
};

/// Dedup, corpus preparation, and the multi-worker pretraining loop.
PretrainRun run_pretraining(const ExperimentConfig& config, const PretrainOptions& options = {});

/// Registry rows of every worker, one line per parameter name.
std::string registry_table(Trainer& trainer);

/// Config recorded by checkpoint_metadata; CheckpointError when absent.
ExperimentConfig config_from_metadata(const std::string& metadata);
/// Config with the experiment and training seeds replaced.
ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed);

/// Serialized into checkpoint metadata: seed, steps, and the resolved config.
std::string checkpoint_metadata(const ExperimentConfig& config, std::int64_t steps);

struct AblationVariant {
  ShareType share = ShareType::Task;
  bool pos_embed_shared = true;
  bool operator==(const AblationVariant&) const = default;
};

/// Every share type crossed with shared and separate positional embeddings.
std::vector<AblationVariant> default_ablation_grid();

struct AblationOptions {
  std::vector<AblationVariant> variants = default_ablation_grid();
  /// Pretraining steps per variant; 0 keeps the config's max_iter.
  std::int64_t pretrain_steps = 0;
  Protocol protocol = Protocol::FullFt;
  std::vector<Scenario> scenarios{Scenario::InDataset, Scenario::OutOfDataset};
  int contexts = 1;
};

struct AblationColumn {
  AblationVariant variant;
  std::vector<EvalReport> reports;
  /// Mean of the higher-is-better primary metrics.
  double average = 0.0;
  double pretrain_seconds = 0.0;
};

struct AblationTable {
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::FullFt;
  std::int64_t pretrain_steps = 0;
  std::vector<AblationColumn> columns;
};

/// Matched pretrain and evaluate per variant, all with the config's seed.
AblationTable run_ablation(const ExperimentConfig& config, const AblationOptions& options);
/// Variants as columns; rows Shared Pos. Embedding, Projector Share Type, one
/// per evaluated dataset, and On average.
std::string format_ablation(const AblationTable& table);
std::string ablation_csv(const AblationTable& table);

}  // namespace path_engine
