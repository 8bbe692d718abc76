#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "path_engine/autograd.hpp"
#include "path_engine/ops.hpp"
#include "path_engine/random.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

enum class ScopeKind { Global, Task, Dataset };

/// Which workers share a parameter: all of them, those of one task, or the
/// single worker of one dataset.
struct SharingScope {
  ScopeKind kind = ScopeKind::Global;
  std::string task;
  std::string dataset;

  static SharingScope global() { return {}; }
  static SharingScope of_task(std::string t) { return {ScopeKind::Task, std::move(t), {}}; }
  static SharingScope of_dataset(std::string t, std::string d) { return {ScopeKind::Dataset, std::move(t), std::move(d)}; }

  std::string str() const;
  bool operator==(const SharingScope&) const = default;
};

struct ParamOptions {
  /// Layer-decay depth: 0 for the stem, 1..L for blocks, L+1 for projector and heads.
  int depth_index = 0;
  bool weight_decay = true;
};

struct Parameter {
  std::string name;
  Var var;
  SharingScope scope;
  bool trainable = true;
  int depth_index = 0;
  bool weight_decay = true;

  void set_trainable(bool flag) {
    trainable = flag;
    var.set_requires_grad(flag);
  }
};

/// Owns the named parameters (and batch-norm buffers) of one model replica.
/// Initial values are a pure function of (seed, name), so replicas built
/// independently on different workers start bitwise identical.
class ParamStore {
 public:
  using ScopeResolver = std::function<SharingScope(const std::string&)>;

  explicit ParamStore(std::uint64_t seed = 0, ScopeResolver resolver = {});
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& create(const std::string& name, Tensor init, ParamOptions options = {});
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  /// Parameters in name order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<std::string> names() const;

  ops::BatchNormState& batch_norm_state(const std::string& name, std::int64_t channels);
  std::map<std::string, ops::BatchNormState>& batch_norm_states() { return batch_norms_; }
  const std::map<std::string, ops::BatchNormState>& batch_norm_states() const { return batch_norms_; }

  /// Init stream for the parameter called `name`.
  Rng init_rng(const std::string& name) const { return Rng(derive_seed(seed_, name)); }
  std::uint64_t seed() const { return seed_; }
  void zero_grad();

 private:
  std::uint64_t seed_;
  ScopeResolver resolver_;
  std::map<std::string, Parameter> params_;
  std::map<std::string, ops::BatchNormState> batch_norms_;
};

/// Prefix-based scope: backbone -> GLOBAL, projector.<group> -> TASK(group),
/// head.<task>.<dataset> -> DATASET. Used when no registry is attached.
SharingScope default_scope_for(const std::string& name);

}  // namespace path_engine
