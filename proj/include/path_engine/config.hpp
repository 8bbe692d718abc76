#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "path_engine/registry.hpp"
#include "path_engine/trainer.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

enum class Scenario { InDataset, OutOfDataset, UnseenTask };

/// "in", "out", "unseen".
std::string to_string(Scenario scenario);
Scenario parse_scenario(const std::string& text);

struct EvalPlan {
  std::vector<Scenario> scenarios{Scenario::InDataset, Scenario::OutOfDataset, Scenario::UnseenTask};
  std::vector<Protocol> protocols{Protocol::HeadFt, Protocol::PartialFt, Protocol::FullFt};
  std::int64_t partial_k = 2;
  std::int64_t steps = 200;
  double lr = 1e-3;
  std::int64_t batch_size = 16;
  std::int64_t train_samples = 192;
  std::int64_t test_samples = 96;
  /// Heatmap pixels.
  double pck_threshold = 1.0;
  /// Downstream dataset of a family absent from pretraining.
  DatasetSpec unseen;
  /// Pretraining dataset whose held-out sibling is the transfer target.
  std::string transfer_dataset;
  std::vector<std::uint64_t> transfer_seeds{1, 2, 3};

  EvalPlan();
  void validate(const std::vector<DatasetSpec>& pretraining) const;
  bool operator==(const EvalPlan&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainPlan plan;
  std::vector<DatasetSpec> datasets;
  EvalPlan evaluation;

  /// Module-level checks shared by every command.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// JSON document with blocks seed, backbone, projector, lr_schedule,
/// optimizer, layer_decay, datasets and evaluation. Omitted keys keep their
/// defaults; unknown keys are a ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& config);

}  // namespace path_engine
