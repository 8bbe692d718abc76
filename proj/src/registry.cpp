#include "path_engine/registry.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

namespace {

constexpr const char* kPosEmbedTaskPrefix = "backbone.pos_embed.";

bool valid_component(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

SharingRegistry::SharingRegistry(std::vector<TaskDatasets> tasks, ShareType share, bool pos_embed_shared)
    : tasks_(std::move(tasks)), share_(share), pos_embed_shared_(pos_embed_shared) {
  if (tasks_.empty()) throw ConfigError("registry needs at least one task");
  std::set<std::string> task_names, dataset_names;
  for (const auto& t : tasks_) {
    if (!valid_component(t.task)) throw ConfigError("invalid task name '" + t.task + "'");
    if (!task_names.insert(t.task).second) throw ConfigError("duplicate task name '" + t.task + "'");
    if (t.datasets.empty()) throw ConfigError("task '" + t.task + "' has no datasets");
    for (const auto& d : t.datasets) {
      if (!valid_component(d)) throw ConfigError("invalid dataset name '" + d + "'");
      if (!dataset_names.insert(d).second) throw ConfigError("duplicate dataset name '" + d + "'");
      workers_.push_back({static_cast<int>(workers_.size()), t.task, d});
    }
  }

  groups_.push_back({GroupKind::Backbone, "backbone.", SharingScope::global()});
  if (pos_embed_shared_) {
    groups_.push_back({GroupKind::PosEmbed, VitBackbone::kSharedPosEmbed, SharingScope::global()});
  } else {
    for (const auto& t : tasks_)
      groups_.push_back({GroupKind::PosEmbed, kPosEmbedTaskPrefix + t.task, SharingScope::of_task(t.task)});
  }
  switch (share_) {
    case ShareType::All: groups_.push_back({GroupKind::Projector, "projector.all.", SharingScope::global()}); break;
    case ShareType::Task:
      for (const auto& t : tasks_)
        groups_.push_back({GroupKind::Projector, "projector." + t.task + ".", SharingScope::of_task(t.task)});
      break;
    case ShareType::Dataset:
      for (const auto& w : workers_)
        groups_.push_back(
            {GroupKind::Projector, "projector." + w.dataset + ".", SharingScope::of_dataset(w.task, w.dataset)});
      break;
  }
  for (const auto& w : workers_)
    groups_.push_back(
        {GroupKind::Head, head_prefix(w.task, w.dataset) + ".", SharingScope::of_dataset(w.task, w.dataset)});
}

const WorkerSlot& SharingRegistry::worker(int index) const {
  if (index < 0 || index >= num_workers()) throw LookupError("no worker " + std::to_string(index));
  return workers_[static_cast<std::size_t>(index)];
}

int SharingRegistry::worker_of(const std::string& task, const std::string& dataset) const {
  for (const auto& w : workers_)
    if (w.task == task && w.dataset == dataset) return w.index;
  throw LookupError("no worker for dataset " + task + "/" + dataset);
}

std::vector<int> SharingRegistry::workers_of_task(const std::string& task) const {
  std::vector<int> out;
  for (const auto& w : workers_)
    if (w.task == task) out.push_back(w.index);
  return out;
}

std::size_t SharingRegistry::count(GroupKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(groups_.begin(), groups_.end(), [kind](const ParamGroup& g) { return g.kind == kind; }));
}

std::string SharingRegistry::projector_group(int index) const {
  const auto& w = worker(index);
  switch (share_) {
    case ShareType::All: return "all";
    case ShareType::Task: return w.task;
    case ShareType::Dataset: return w.dataset;
  }
  return w.task;
}

std::string SharingRegistry::pos_embed_name(int index) const {
  return pos_embed_shared_ ? std::string(VitBackbone::kSharedPosEmbed) : kPosEmbedTaskPrefix + worker(index).task;
}

SharingScope SharingRegistry::scope_of(const std::string& name) const {
  const bool pos = name == VitBackbone::kSharedPosEmbed || starts_with(name, kPosEmbedTaskPrefix);
  for (const auto& g : groups_) {
    if (pos ? g.kind == GroupKind::PosEmbed && name == g.prefix
            : g.kind != GroupKind::PosEmbed && starts_with(name, g.prefix))
      return g.scope;
  }
  throw LookupError("parameter '" + name + "' belongs to no sharing group");
}

std::vector<int> SharingRegistry::sync_set(const SharingScope& scope) const {
  std::vector<int> out;
  for (const auto& w : workers_) {
    const bool member = scope.kind == ScopeKind::Global ||
                        (scope.kind == ScopeKind::Task && w.task == scope.task) ||
                        (scope.kind == ScopeKind::Dataset && w.task == scope.task && w.dataset == scope.dataset);
    if (member) out.push_back(w.index);
  }
  return out;
}

std::vector<int> SharingRegistry::sync_set(const std::string& name) const { return sync_set(scope_of(name)); }

ParamStore::ScopeResolver SharingRegistry::resolver() const {
  return [copy = *this](const std::string& name) { return copy.scope_of(name); };
}

std::string to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::Pretrain: return "pretrain";
    case Protocol::FullFt: return "full";
    case Protocol::HeadFt: return "head";
    case Protocol::PartialFt: return "partial";
  }
  return "?";
}

Protocol parse_protocol(const std::string& text) {
  if (text == "pretrain") return Protocol::Pretrain;
  if (text == "full" || text == "full-ft") return Protocol::FullFt;
  if (text == "head" || text == "head-ft") return Protocol::HeadFt;
  if (text == "partial" || text == "partial-ft") return Protocol::PartialFt;
  throw ConfigError("unknown protocol '" + text + "' (expected full, head or partial)");
}

FreezeMask freeze_mask(Protocol protocol, const std::vector<std::string>& names, std::int64_t depth,
                       std::int64_t k) {
  if (k < 0 || k > depth)
    throw ConfigError("partial finetuning K=" + std::to_string(k) + " outside [0, " + std::to_string(depth) + "]");
  FreezeMask mask{.protocol = protocol};
  mask.zero_weight_decay = protocol == Protocol::HeadFt || protocol == Protocol::PartialFt;
  for (const auto& n : names) {
    bool on = true;
    if (protocol == Protocol::HeadFt || protocol == Protocol::PartialFt) {
      on = starts_with(n, "head.");
      if (protocol == Protocol::PartialFt)
        for (std::int64_t b = depth - k + 1; b <= depth && !on; ++b) on = starts_with(n, VitBackbone::block_prefix(b));
    }
    if (on) mask.trainable.insert(n);
  }
  return mask;
}

void apply_freeze(ParamStore& store, const FreezeMask& mask) {
  for (auto* p : store.parameters()) p->set_trainable(mask.is_trainable(p->name));
}

std::vector<RegistryRow> registry_rows(const SharingRegistry& registry, const ParamStore& store) {
  std::vector<RegistryRow> rows;
  for (const auto* p : store.parameters())
    rows.push_back({p->name, p->scope.str(), registry.sync_set(p->scope), p->trainable});
  return rows;
}

std::string format_registry(const std::vector<RegistryRow>& rows) {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "name" << "  " << std::setw(28) << "scope" << "  "
     << std::setw(12) << "sync_set" << "  trainable\n";
  for (const auto& r : rows)
    os << std::setw(static_cast<int>(width)) << r.name << "  " << std::setw(28) << r.scope << "  " << std::setw(12)
       << ("{" + join(r.sync_set) + "}") << "  " << (r.trainable ? "yes" : "no") << "\n";
  return os.str();
}

EvalModel discard_projectors(const std::map<std::string, Tensor>& pretrained, const BackboneConfig& backbone,
                             const HeadConfig& head, const std::string& head_prefix, std::uint64_t seed) {
  EvalModel model;
  model.store = std::make_unique<ParamStore>(seed);
  model.backbone = VitBackbone(backbone, *model.store);
  for (auto* p : model.store->parameters()) {
    auto it = pretrained.find(p->name);
    if (it != pretrained.end()) {
      if (it->second.shape() != p->var.shape())
        throw CheckpointError("checkpoint entry '" + p->name + "' has shape " + shape_str(it->second.shape()) +
                              ", model expects " + shape_str(p->var.shape()));
      p->var.mutable_value() = it->second;
      continue;
    }
    if (p->name != VitBackbone::kSharedPosEmbed) throw CheckpointError("checkpoint lacks '" + p->name + "'");
    std::vector<const Tensor*> per_task;
    for (const auto& [name, t] : pretrained)
      if (starts_with(name, kPosEmbedTaskPrefix)) per_task.push_back(&t);
    if (per_task.empty()) throw CheckpointError("checkpoint has no positional embedding");
    Tensor mean(p->var.shape());
    for (std::int64_t i = 0; i < mean.numel(); ++i) {
      double acc = 0.0;
      for (const auto* t : per_task) {
        if (t->shape() != mean.shape()) throw CheckpointError("per-task positional embeddings differ in shape");
        acc += (*t)[i];
      }
      mean[i] = static_cast<real>(acc / static_cast<double>(per_task.size()));
    }
    p->var.mutable_value() = std::move(mean);
  }
  model.head_prefix = head_prefix;
  model.head = make_head(head, *model.store, head_prefix, backbone.embed_dim, static_cast<int>(backbone.depth) + 1);
  return model;
}

}  // namespace path_engine
