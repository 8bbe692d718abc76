#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "path_engine/backbone.hpp"
#include "path_engine/heads.hpp"
#include "path_engine/param_store.hpp"
#include "path_engine/projector.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

struct TaskDatasets {
  std::string task;
  std::vector<std::string> datasets;
};

struct WorkerSlot {
  int index = 0;
  std::string task;
  std::string dataset;
};

enum class GroupKind { Backbone, PosEmbed, Projector, Head };

/// A set of parameters sharing one name prefix and one scope.
struct ParamGroup {
  GroupKind kind = GroupKind::Backbone;
  std::string prefix;
  SharingScope scope;
};

/// Maps every parameter name to its sharing scope and the workers that hold a
/// copy of it. One worker per dataset, numbered in task-then-dataset order.
/// Immutable after construction.
class SharingRegistry {
 public:
  SharingRegistry() = default;
  SharingRegistry(std::vector<TaskDatasets> tasks, ShareType share, bool pos_embed_shared);

  const std::vector<WorkerSlot>& workers() const { return workers_; }
  int num_workers() const { return static_cast<int>(workers_.size()); }
  const WorkerSlot& worker(int index) const;
  int worker_of(const std::string& task, const std::string& dataset) const;
  std::vector<int> workers_of_task(const std::string& task) const;
  const std::vector<TaskDatasets>& tasks() const { return tasks_; }
  ShareType share_type() const { return share_; }
  bool pos_embed_shared() const { return pos_embed_shared_; }

  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::size_t count(GroupKind kind) const;

  /// Projector group name used by a worker ("projector.<group>.*").
  std::string projector_group(int worker) const;
  /// Positional-embedding parameter read by a worker.
  std::string pos_embed_name(int worker) const;
  static std::string head_prefix(const std::string& task, const std::string& dataset) {
    return "head." + task + "." + dataset;
  }

  /// Throws LookupError for names outside every group.
  SharingScope scope_of(const std::string& name) const;
  std::vector<int> sync_set(const std::string& name) const;
  std::vector<int> sync_set(const SharingScope& scope) const;
  ParamStore::ScopeResolver resolver() const;

 private:
  std::vector<TaskDatasets> tasks_;
  ShareType share_ = ShareType::Task;
  bool pos_embed_shared_ = true;
  std::vector<WorkerSlot> workers_;
  std::vector<ParamGroup> groups_;
};

enum class Protocol { Pretrain, FullFt, HeadFt, PartialFt };

std::string to_string(Protocol protocol);
/// Accepts "pretrain", "full", "head", "partial" (and the "-ft" spellings).
Protocol parse_protocol(const std::string& text);

struct FreezeMask {
  Protocol protocol = Protocol::Pretrain;
  std::set<std::string> trainable;
  bool zero_weight_decay = false;

  bool is_trainable(const std::string& name) const { return trainable.count(name) != 0; }
};

/// Trainable set of an evaluation model for a protocol. `depth` is the
/// backbone block count, `k` the partial-finetuning block count.
FreezeMask freeze_mask(Protocol protocol, const std::vector<std::string>& names, std::int64_t depth,
                       std::int64_t k = 2);
void apply_freeze(ParamStore& store, const FreezeMask& mask);

struct RegistryRow {
  std::string name;
  std::string scope;
  std::vector<int> sync_set;
  bool trainable = true;
};

std::vector<RegistryRow> registry_rows(const SharingRegistry& registry, const ParamStore& store);
std::string format_registry(const std::vector<RegistryRow>& rows);

/// Backbone plus one downstream head; no projector.
struct EvalModel {
  std::unique_ptr<ParamStore> store;
  VitBackbone backbone;
  std::unique_ptr<Head> head;
  std::string head_prefix;

  FeatureMap features(const Var& images) const { return backbone.forward_features(images).final; }
};

/// Builds an evaluation model from pretrained parameter values: backbone
/// entries are copied, projector and pretraining-head entries are dropped, and
/// a fresh head is initialized from `seed`. Per-task positional embeddings are
/// averaged into the shared slot.
EvalModel discard_projectors(const std::map<std::string, Tensor>& pretrained, const BackboneConfig& backbone,
                             const HeadConfig& head, const std::string& head_prefix, std::uint64_t seed);

}  // namespace path_engine
