#pragma once

#include <cmath>

#include "doctest.h"
#include "path_engine/gradcheck.hpp"
#include "path_engine/ops.hpp"
#include "path_engine/random.hpp"

namespace test {

using namespace path_engine;

inline Var leaf(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Var(uniform_tensor(std::move(shape), lo, hi, rng), true);
}

/// Contracts an arbitrary output against fixed random weights so every output
/// coordinate contributes to the checked scalar.
inline Var probe(const Var& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  Var w(uniform_tensor(out.shape(), -1.0, 1.0, rng));
  return ops::sum(ops::mul(out, w));
}

inline void require_gradcheck(const std::function<Var()>& fn, const std::vector<GradCheckInput>& inputs,
                              GradCheckOptions options = {}) {
  auto report = grad_check(fn, inputs, options);
  INFO(report.failure);
  for (const auto& e : report.entries) INFO(e.name << " rel " << e.rel_error);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-3);
}

inline void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(std::fabs(a[i] - b[i]) <= tol);
}

}  // namespace test
