#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "path_engine/autograd.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

struct GradCheckOptions {
  double eps = 1e-2;
  double tolerance = 1e-3;
  /// Largest number of coordinates probed per parameter; larger parameters are
  /// sampled with a fixed stream.
  std::int64_t max_probes = 48;
  std::uint64_t seed = 0;
  /// Inputs whose gradient is much smaller than the largest one in the check
  /// are compared against this fraction of that largest magnitude instead.
  double scale_floor = 1e-2;
};

struct GradCheckEntry {
  std::string name;
  bool frozen = false;
  std::int64_t probes = 0;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| over probes, divided by the larger of the
  /// largest gradient magnitude over the same probes and the scale floor.
  double rel_error = 0.0;
  std::int64_t worst_index = -1;
  /// Largest |analytic gradient| seen; exactly 0 for frozen inputs.
  double max_abs_grad = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
  std::string failure;
};

struct GradCheckInput {
  std::string name;
  Var var;
};

/// Compares reverse-mode gradients of the scalar `fn` against central differences
/// for every input. `fn` must rebuild its graph from the inputs on each call.
/// Inputs with requires_grad off are treated as frozen: their analytic gradient
/// must be exactly zero and they are not perturbed.
GradCheckReport grad_check(const std::function<Var()>& fn, const std::vector<GradCheckInput>& inputs,
                           const GradCheckOptions& options = {});

}  // namespace path_engine
