#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Precision-neutral entry points to the gradient-check cases, callable from
// code built against either engine instance.

namespace path_engine::gradsuite {

struct Row {
  std::string name;
  bool passed = false;
  double max_rel_error = 0.0;
  std::string failure;
  double seconds = 0.0;
};

struct Options {
  std::uint64_t seed = 7;
  bool inject_fault = false;
  /// Restrict to cases whose name contains this text.
  std::string filter;
};

/// Cases evaluated by the double-precision instance with a small step.
std::vector<Row> run_double(const Options& options);
/// Cases evaluated by the single-precision instance with each case's own step.
std::vector<Row> run_single(const Options& options);

}  // namespace path_engine::gradsuite
