#include "grad_suite.hpp"

#include "grad_cases.hpp"

namespace path_engine::gradsuite {
namespace {

std::vector<Row> run(const Options& options, bool double_precision) {
  auto cases = verify::primitive_grad_cases(options.seed);
  auto model = verify::model_grad_cases(options.seed);
  cases.insert(cases.end(), model.begin(), model.end());
  std::erase_if(cases, [&](const verify::GradCase& c) { return c.name.find(options.filter) == std::string::npos; });
  if (double_precision) {
    for (auto& c : cases) c.options.eps = 1e-6;
  }
  std::vector<Row> rows;
  for (auto& r : verify::run_grad_cases(cases, options.inject_fault))
    rows.push_back({r.name, r.report.passed, r.report.max_rel_error, r.report.failure, r.seconds});
  return rows;
}

}  // namespace

#if PATH_ENGINE_DOUBLE
std::vector<Row> run_double(const Options& options) { return run(options, true); }
#else
std::vector<Row> run_single(const Options& options) { return run(options, false); }
#endif

}  // namespace path_engine::gradsuite
