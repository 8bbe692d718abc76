#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "path_engine/config.hpp"

// Property suites shared by `path_engine verify` and the acceptance binary.
namespace path_engine::inline PATH_ENGINE_NS::suites {

struct SuiteResult {
  std::string name;
  bool passed = false;
  /// Summary on success, first failing property otherwise.
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 7;
  /// Negative control: corrupts one backward pass per gradient case.
  bool inject_gradient_bug = false;
  std::int64_t sharing_steps = 200;
  std::int64_t freeze_steps = 500;
  int oracle_trials = 100;
};

/// Central differences against reverse mode for every primitive, the
/// projector chain and each head, in double precision; fails past 60 s.
SuiteResult gradcheck(const SuiteOptions& options);
/// Five workers (3 + 2 datasets over two tasks): global parameters bitwise
/// equal everywhere and task parameters within their task after every step;
/// head parameters move only with their own worker's data.
SuiteResult sharing_identity(const SuiteOptions& options);
/// Gates start at 0.5, the temperature example, and the fusion envelope.
SuiteResult gating(const SuiteOptions& options);
/// Loss weights and learning-rate values of the default schedule.
SuiteResult schedule_constants(const SuiteOptions& options);
/// Head and partial finetuning touch only their trainable set, with zero
/// weight decay in every optimizer state.
SuiteResult freeze_semantics(const SuiteOptions& options);
/// Metrics, GIoU and Hungarian matching against brute-force references.
SuiteResult metric_oracles(const SuiteOptions& options);
/// Planted evaluation images are exactly the removed pretraining images.
SuiteResult dedup_oracle(const SuiteOptions& options);

struct Suite {
  std::string name;
  std::function<SuiteResult(const SuiteOptions&)> run;
};

/// Every suite, in report order.
std::vector<Suite> all_suites();

}  // namespace path_engine::suites
