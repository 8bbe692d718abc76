#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "path_engine/config.hpp"
#include "path_engine/metrics.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

/// One downstream dataset: which stream it is drawn from and where its
/// samples start.
struct EvalTarget {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  std::int64_t first_index = 0;
  Split split = Split::InEval;
};

/// Seed of the held-out sibling of a pretraining dataset.
std::uint64_t out_of_dataset_seed(const DatasetSpec& spec);

/// in: every pretraining stream past its pretraining indices; out: every
/// pretraining family on its held-out seed; unseen: the unseen-task dataset.
std::vector<EvalTarget> eval_targets(const ExperimentConfig& config, Scenario scenario);

struct EvalSplits {
  SyntheticDataset train;
  SyntheticDataset test;
};

EvalSplits make_splits(const EvalTarget& target, const EvalPlan& plan);

struct PreparedCorpora {
  std::vector<SyntheticDataset> datasets;
  /// Per dataset, indices removed from the raw pretraining stream.
  std::vector<DedupResult> dedup;
};

/// Pretraining corpora with every image whose hash matches an in- or
/// out-of-dataset evaluation image removed.
PreparedCorpora prepare_corpora(const ExperimentConfig& config);

struct Metric {
  std::string name;
  double value = 0.0;
  bool higher_is_better = true;
};

struct EvalRow {
  std::string task;
  std::string dataset;
  TaskFamily family = TaskFamily::ReID;
  /// Primary metric first.
  std::vector<Metric> metrics;
  /// Mean finetuning loss over the first and last tenth of the steps.
  double first_loss = 0.0;
  double last_loss = 0.0;

  const Metric& primary() const { return metrics.front(); }
};

struct EvalReport {
  Scenario scenario = Scenario::InDataset;
  Protocol protocol = Protocol::FullFt;
  std::uint64_t seed = 0;
  bool backbone_frozen = false;
  std::vector<EvalRow> rows;
  double seconds = 0.0;
};

/// Metrics of `head` on features of `test`; the primary metric comes first.
std::vector<Metric> evaluate_model(const EvalModel& model, const SyntheticDataset& test, const EvalPlan& plan);

struct FinetuneResult {
  EvalRow row;
  Checkpoint before;
  Checkpoint after;
  std::vector<double> losses;
  /// Optimizer state after the last step.
  std::map<std::string, Optimizer::State> optimizer_states;
};

/// Applies the protocol's freeze mask, trains on `splits.train` for
/// plan.evaluation.steps, and evaluates on `splits.test`. Head finetuning
/// trains on cached backbone features.
FinetuneResult finetune(EvalModel& model, const EvalTarget& target, const EvalSplits& splits, Protocol protocol,
                        const ExperimentConfig& config, std::uint64_t seed);

/// Evaluation model for one target from a pretrained checkpoint.
EvalModel build_eval_model(const Checkpoint& pretrained, const ExperimentConfig& config, const EvalTarget& target,
                           std::uint64_t seed);
/// Checkpoint of a never-trained backbone.
Checkpoint random_backbone(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every target of the scenario under the protocol. Throws ConfigError
/// when the scenario or protocol is not enabled in the config.
EvalReport run_evaluation(const Checkpoint& pretrained, const ExperimentConfig& config, Scenario scenario,
                          Protocol protocol);

std::string report_csv_header();
std::string report_csv(const EvalReport& report);
/// Columns grouped by task, one row per metric.
std::string format_report(const EvalReport& report);

struct TransferTrial {
  std::uint64_t seed = 0;
  double pretrained = 0.0;
  double random = 0.0;
  bool higher_is_better = true;
  bool pretrained_better() const { return higher_is_better ? pretrained > random : pretrained < random; }
};

struct TransferReport {
  std::string target;
  std::string metric;
  std::vector<TransferTrial> trials;
};

/// Head finetuning on the held-out sibling of config.evaluation.transfer_dataset
/// with the pretrained frozen backbone versus a freshly initialized one.
TransferReport transfer_test(const Checkpoint& pretrained, const ExperimentConfig& config);

}  // namespace path_engine
