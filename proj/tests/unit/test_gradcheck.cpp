#include <cmath>

#include "grad_cases.hpp"
#include "grad_suite.hpp"
#include "helpers.hpp"

using namespace test;

TEST_CASE("sum of squares checks to 1e-4") {
  Var x = leaf({4, 4}, 1);
  auto report = grad_check([&] { return ops::sum(ops::square(x)); }, {{"x", x}});
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].probes == 16);
}

TEST_CASE("a frozen input reports a gradient of exactly zero") {
  Var x = leaf({3}, 2);
  Var frozen = leaf({3}, 3);
  frozen.set_requires_grad(false);
  auto report = grad_check([&] { return ops::sum(ops::mul(x, frozen)); }, {{"x", x}, {"frozen", frozen}});
  CHECK(report.passed);
  REQUIRE(report.entries.size() == 2);
  CHECK(report.entries[1].frozen);
  CHECK(report.entries[1].max_abs_grad == 0.0);
}

TEST_CASE("non-finite values fail with a location") {
  Var x(Tensor::from({3}, {1.0f, 0.005f, 2.0f}), true);
  auto report = grad_check([&] { return ops::sum(ops::log(x)); }, {{"x", x}});
  CHECK_FALSE(report.passed);
  CHECK(report.failure.find("x[1]") != std::string::npos);
}

TEST_CASE("wrong gradients are caught") {
  Var x = leaf({5}, 4);
  auto wrong = [&] {
    return make_result(Tensor::scalar(ops::sum(ops::square(x)).item()), {x}, [](Node& self) {
      auto& g = self.inputs[0]->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad()[0] * 2.0f * self.inputs[0]->value[i] * 1.1f;
    });
  };
  CHECK_FALSE(grad_check(wrong, {{"x", x}}).passed);
}

TEST_CASE("every primitive matches central differences in single precision") {
  auto cases = path_engine::verify::primitive_grad_cases(7);
  for (const auto& r : path_engine::verify::run_grad_cases(cases)) {
    INFO(r.name << ": " << r.report.failure << " max rel " << r.report.max_rel_error);
    CHECK(r.report.passed);
  }
}

TEST_CASE("primitives, projector chain and every head match central differences in double precision") {
  auto rows = path_engine::gradsuite::run_double({.seed = 11});
  CHECK(rows.size() > 60);
  for (const auto& r : rows) {
    INFO(r.name << ": " << r.failure << " max rel " << r.max_rel_error);
    CHECK(r.passed);
  }
}

TEST_CASE("injected fault fails every case") {
  for (const auto& r : path_engine::gradsuite::run_double({.seed = 3, .inject_fault = true})) {
    INFO(r.name);
    CHECK_FALSE(r.passed);
  }
}
