#include "path_engine/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "path_engine/random.hpp"

namespace path_engine::inline PATH_ENGINE_NS {
namespace {

std::vector<std::int64_t> probe_indices(std::int64_t n, std::int64_t max_probes, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_probes) return idx;
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(static_cast<std::size_t>(max_probes));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& fn, const std::vector<GradCheckInput>& inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  auto fail = [&](std::string message) {
    if (report.passed) report.failure = std::move(message);
    report.passed = false;
  };

  for (const auto& in : inputs) in.var.node()->clear_grad();
  Var root = fn();
  if (root.numel() != 1) {
    fail("function output has " + std::to_string(root.numel()) + " elements, expected 1");
    return report;
  }
  if (!std::isfinite(root.item())) {
    fail("non-finite function value at the unperturbed point");
    return report;
  }
  root.backward();

  Rng rng(options.seed);
  NoGradGuard no_grad;
  std::vector<double> scales(inputs.size(), 0.0);
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const auto& in = inputs[n];
    GradCheckEntry entry;
    entry.name = in.name;
    entry.frozen = !in.var.requires_grad();
    const auto grad = in.var.grad();
    for (real g : grad) entry.max_abs_grad = std::max(entry.max_abs_grad, static_cast<double>(std::fabs(g)));

    if (entry.frozen) {
      if (entry.max_abs_grad != 0.0) fail(in.name + ": frozen input received a nonzero gradient");
      report.entries.push_back(entry);
      continue;
    }

    auto& values = in.var.node()->value;
    const auto probes = probe_indices(values.numel(), options.max_probes, rng);
    entry.probes = static_cast<std::int64_t>(probes.size());
    for (auto i : probes) {
      const real saved = values[i];
      values[i] = static_cast<real>(saved + options.eps);
      const double plus = fn().item();
      values[i] = static_cast<real>(saved - options.eps);
      const double minus = fn().item();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        fail(in.name + "[" + std::to_string(i) + "]: non-finite function value under perturbation");
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double analytic = grad.empty() ? 0.0 : grad[static_cast<std::size_t>(i)];
      const double err = std::fabs(analytic - numeric);
      scales[n] = std::max({scales[n], std::fabs(analytic), std::fabs(numeric)});
      if (err > entry.max_abs_error) {
        entry.max_abs_error = err;
        entry.worst_index = i;
      }
    }
    report.entries.push_back(entry);
  }

  const double floor = options.scale_floor * *std::max_element(scales.begin(), scales.end());
  for (std::size_t n = 0; n < report.entries.size(); ++n) {
    auto& entry = report.entries[n];
    if (entry.frozen) continue;
    const double scale = std::max(scales[n], floor);
    entry.rel_error = scale > 0.0 ? entry.max_abs_error / scale : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    if (entry.rel_error > options.tolerance) {
      std::ostringstream os;
      os << entry.name << "[" << entry.worst_index << "]: relative error " << entry.rel_error << " exceeds "
         << options.tolerance;
      fail(os.str());
    }
  }
  return report;
}

}  // namespace path_engine
