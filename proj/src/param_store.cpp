#include "path_engine/param_store.hpp"

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::string SharingScope::str() const {
  switch (kind) {
    case ScopeKind::Global:
      return "GLOBAL";
    case ScopeKind::Task:
      return "TASK(" + task + ")";
    case ScopeKind::Dataset:
      return "DATASET(" + task + "," + dataset + ")";
  }
  return "?";
}

namespace {
std::vector<std::string> split_dots(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = s.find('.', start);
    parts.push_back(s.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}
}  // namespace

SharingScope default_scope_for(const std::string& name) {
  const auto parts = split_dots(name);
  if (parts[0] == "backbone") return SharingScope::global();
  if (parts[0] == "projector" && parts.size() > 2) return SharingScope::of_task(parts[1]);
  if (parts[0] == "head" && parts.size() > 3) return SharingScope::of_dataset(parts[1], parts[2]);
  throw LookupError("no sharing scope for parameter '" + name + "'");
}

ParamStore::ParamStore(std::uint64_t seed, ScopeResolver resolver)
    : seed_(seed), resolver_(resolver ? std::move(resolver) : ScopeResolver(default_scope_for)) {}

Parameter& ParamStore::create(const std::string& name, Tensor init, ParamOptions options) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Parameter p;
  p.name = name;
  p.var = Var(std::move(init), true);
  p.scope = resolver_(name);
  p.depth_index = options.depth_index;
  p.weight_decay = options.weight_decay;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto* p = find(name);
  if (!p) throw LookupError("unknown parameter '" + name + "'");
  return *p;
}

const Parameter& ParamStore::get(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw LookupError("unknown parameter '" + name + "'");
  return *p;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

std::vector<Parameter*> ParamStore::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamStore::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& [_, p] : params_) out.push_back(&p);
  return out;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : params_) out.push_back(n);
  return out;
}

ops::BatchNormState& ParamStore::batch_norm_state(const std::string& name, std::int64_t channels) {
  auto it = batch_norms_.find(name);
  if (it == batch_norms_.end()) it = batch_norms_.emplace(name, ops::BatchNormState(channels)).first;
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.var.zero_grad();
}

}  // namespace path_engine
