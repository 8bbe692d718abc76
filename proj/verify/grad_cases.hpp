#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "path_engine/gradcheck.hpp"

namespace path_engine::inline PATH_ENGINE_NS::verify {

struct GradCase {
  std::string name;
  std::function<Var()> fn;
  std::vector<GradCheckInput> inputs;
  GradCheckOptions options;
};

struct GradCaseResult {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// One case per differentiable primitive (extents <= 16).
std::vector<GradCase> primitive_grad_cases(std::uint64_t seed);
/// Transformer block, SE block, projector chain, and every task head with its loss.
std::vector<GradCase> model_grad_cases(std::uint64_t seed);

/// With `inject_fault`, each case's output passes through an identity op whose
/// backward scales the incoming gradient by 1.01; every case must then fail.
std::vector<GradCaseResult> run_grad_cases(const std::vector<GradCase>& cases, bool inject_fault = false);

}  // namespace path_engine::verify
