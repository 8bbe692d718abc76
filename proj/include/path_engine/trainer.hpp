#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "path_engine/backbone.hpp"
#include "path_engine/checkpoint.hpp"
#include "path_engine/data.hpp"
#include "path_engine/heads.hpp"
#include "path_engine/projector.hpp"
#include "path_engine/registry.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

struct DatasetSpec {
  std::string task;
  std::string dataset;
  TaskFamily family = TaskFamily::ReID;
  std::int64_t batch_per_replica = 8;
  std::int64_t replicas = 1;
  double sample_weight = 1.0;
  HeadConfig head;
  DataConfig data;
  std::uint64_t data_seed = 0;
  std::int64_t num_samples = 256;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

/// sample_weight x batch_per_replica x replicas.
double loss_weight(const DatasetSpec& spec);

enum class OptimizerKind { Sgd, Adafactor };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adafactor;
  double beta1 = 0.9;
  double clip_beta2 = 0.999;
  double clip_threshold = 0.5;
  double decay_rate = -0.8;
  double eps1 = 1e-30;
  bool scale_parameter = false;
  bool relative_step = false;
  double weight_decay = 0.05;
  /// SGD only.
  double momentum = 0.0;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainPlan {
  std::int64_t max_iter = 80000;
  std::int64_t warmup_steps = 1500;
  double base_lr = 1e-7;
  double warmup_lr = 5e-4;
  std::vector<double> lr_mults{0.5, 0.2, 0.1};
  std::vector<std::int64_t> lr_steps{40000, 60000, 76000};
  double backbone_multiplier = 1.0;
  double pos_embed_multiplier = 1.0;
  std::int64_t num_layers = 12;
  double layer_decay_rate = 0.75;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainPlan&) const = default;
};

/// Linear warmup from base_lr to warmup_lr, then warmup_lr times the
/// multiplier of the latest lr_step reached (multipliers replace each other).
double lr_at(std::int64_t step, const TrainPlan& plan);
/// rate^(L + 1 - d) for d in [0, L + 1].
double layer_decay_multiplier(int depth_index, std::int64_t num_layers, double rate);
/// Learning-rate factor of one parameter: layer decay times the backbone or
/// positional-embedding multiplier.
double param_lr_scale(const Parameter& p, const TrainPlan& plan);

/// Per-parameter SGD or Adafactor state. Frozen parameters and parameters
/// without a gradient are skipped.
class Optimizer {
 public:
  struct State {
    std::int64_t steps = 0;
    double weight_decay = 0.0;
    std::vector<double> exp_avg;
    std::vector<double> exp_avg_sq;
    std::vector<double> row;
    std::vector<double> col;
  };

  Optimizer() = default;
  explicit Optimizer(OptimizerConfig config, bool zero_weight_decay = false);

  /// lr_for(p) is the learning rate applied to p this step.
  void step(ParamStore& store, const std::function<double(const Parameter&)>& lr_for);
  const OptimizerConfig& config() const { return config_; }
  bool zero_weight_decay() const { return zero_weight_decay_; }
  /// Weight decay that step() applies to p.
  double weight_decay_for(const Parameter& p) const;
  const std::map<std::string, State>& states() const { return states_; }

 private:
  void sgd(Parameter& p, State& s, double lr);
  void adafactor(Parameter& p, State& s, double lr);

  OptimizerConfig config_;
  bool zero_weight_decay_ = false;
  std::map<std::string, State> states_;
};

struct ModelConfig {
  BackboneConfig backbone;
  ProjectorConfig projector;
  bool pos_embed_shared = true;
  bool operator==(const ModelConfig&) const = default;
};

/// One simulated device: a full replica of backbone, its task's projector and
/// its dataset's head, bound to one dataset.
class Worker {
 public:
  Worker(int index, const DatasetSpec& spec, const ModelConfig& model, const SharingRegistry& registry,
         const SyntheticDataset& data, const TrainPlan& plan);
  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  /// Forward and backward over `replicas` micro-batches; parameter gradients
  /// hold loss_weight times the replica-mean gradient. Returns the unweighted
  /// mean loss. Throws DivergenceError on a non-finite loss.
  double local_step(std::int64_t step);
  /// Loss and gradients on a given batch (no sampling).
  double loss_on(const Batch& batch, double weight);

  int index() const { return index_; }
  const DatasetSpec& spec() const { return spec_; }
  ParamStore& store() { return *store_; }
  const ParamStore& store() const { return *store_; }
  Optimizer& optimizer() { return optimizer_; }
  const VitBackbone& backbone() const { return backbone_; }
  const TaskProjector& projector() const { return projector_; }
  const Head& head() const { return *head_; }
  const std::string& pos_embed_name() const { return pos_embed_name_; }

 private:
  int index_;
  DatasetSpec spec_;
  std::unique_ptr<ParamStore> store_;
  VitBackbone backbone_;
  TaskProjector projector_;
  std::unique_ptr<Head> head_;
  std::string pos_embed_name_;
  BatchSampler sampler_;
  Optimizer optimizer_;
};

/// Replaces each shared gradient by its mean over the parameter's sync set;
/// dataset-scoped gradients pass through. The mean sorts the contributions
/// so it does not depend on worker order.
void synchronize(std::vector<Worker*>& workers, const SharingRegistry& registry);
/// Same reduction on raw per-worker gradient vectors.
std::vector<real> synced_mean(const std::vector<std::span<const real>>& grads);

struct LogRow {
  std::int64_t step = 0;
  std::string dataset;
  double loss = 0.0;
  double lr = 0.0;
};

struct PretrainOptions {
  /// Parallel worker contexts; results do not depend on it.
  int contexts = 1;
  /// Append-only CSV (step,dataset,loss,lr); empty to disable.
  std::filesystem::path log_path;
  /// Called after every synchronized step.
  std::function<void(std::int64_t step, const std::vector<Worker*>&)> on_step;
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
  std::int64_t steps = 0;
  double seconds = 0.0;
};

/// Bulk-synchronous rounds of local_step -> synchronize -> optimizer step.
class Trainer {
 public:
  Trainer(const ModelConfig& model, std::vector<DatasetSpec> specs, const TrainPlan& plan,
          std::vector<SyntheticDataset> corpora, ShareType share);

  /// One round at `step`; returns per-worker mean losses.
  std::vector<double> round(std::int64_t step, int contexts = 1);
  PretrainResult run(const PretrainOptions& options = {});
  /// Union of all workers' parameters; each name is taken from the lowest
  /// worker holding it.
  Checkpoint checkpoint() const;

  const SharingRegistry& registry() const { return registry_; }
  std::vector<Worker*> workers();
  const TrainPlan& plan() const { return plan_; }

 private:
  ModelConfig model_;
  std::vector<DatasetSpec> specs_;
  TrainPlan plan_;
  std::vector<SyntheticDataset> corpora_;
  SharingRegistry registry_;
  std::vector<std::unique_ptr<Worker>> workers_;
};

/// Task list of the registry implied by the dataset specs, in first-seen order.
std::vector<TaskDatasets> task_groups(const std::vector<DatasetSpec>& specs);

}  // namespace path_engine
