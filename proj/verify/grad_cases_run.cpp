#include <chrono>

#include "grad_cases.hpp"

namespace path_engine::inline PATH_ENGINE_NS::verify {
namespace {

Var faulty_identity(const Var& x) {
  return make_result(x.value(), {x}, [](Node& self) {
    auto& in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& g = in->grad();
    const auto& up = self.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 1.01f * up[i];
  });
}

}  // namespace

std::vector<GradCaseResult> run_grad_cases(const std::vector<GradCase>& cases, bool inject_fault) {
  std::vector<GradCaseResult> results;
  for (const auto& c : cases) {
    const auto start = std::chrono::steady_clock::now();
    std::function<Var()> fn = c.fn;
    if (inject_fault) fn = [inner = c.fn] { return faulty_identity(inner()); };
    GradCaseResult r{c.name, grad_check(fn, c.inputs, c.options)};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace path_engine::verify
