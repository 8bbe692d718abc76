// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "path_engine/experiment.hpp"
#include "suites.hpp"

namespace fs = std::filesystem;
using namespace path_engine;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double seconds) {
  std::cout << (o.passed ? "PASS" : "FAIL") << " [" << id << "] " << std::left << std::setw(24) << name
            << std::right << std::fixed << std::setprecision(1) << std::setw(7) << seconds << " s  " << o.detail
            << std::defaultfloat << std::endl;
  failures += !o.passed;
}

template <class F>
void criterion(int id, const std::string& name, F&& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  report(id, name, o, std::chrono::duration<double>(Clock::now() - start).count());
}

Outcome from(const suites::SuiteResult& r) { return {r.passed, r.detail}; }

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, sep);) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct Convergence {
  Checkpoint checkpoint;
  bool ready = false;
};

Outcome convergence(const ExperimentConfig& config, Convergence& out) {
  std::set<std::string> tasks;
  for (const auto& d : config.datasets) tasks.insert(d.task);
  if (config.datasets.size() != 5 || tasks.size() != 3)
    return {false, "desk config must hold 5 datasets over 3 tasks"};
  if (config.plan.max_iter > 3000) return {false, "desk config runs more than 3000 steps"};

  const auto start = Clock::now();
  const auto run = run_pretraining(config);
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  out.checkpoint = run.result.checkpoint;
  out.ready = true;

  std::map<std::string, std::vector<double>> losses;
  for (const auto& row : run.result.log) {
    if (!std::isfinite(row.loss)) return {false, row.dataset + " loss not finite at step " + std::to_string(row.step)};
    losses[row.dataset].push_back(row.loss);
  }
  std::ostringstream detail;
  bool ok = seconds < 600.0;
  detail << config.plan.max_iter << " steps in " << fixed(seconds, 0) << " s; final/first-50 ratios";
  for (const auto& d : config.datasets) {
    const auto& v = losses[d.dataset];
    if (v.size() < 100) return {false, d.dataset + " logged fewer than 100 steps"};
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
      first += v[i];
      last += v[v.size() - 1 - i];
    }
    const double ratio = last / first;
    ok = ok && ratio <= 0.5;
    detail << " " << d.dataset << "=" << fixed(ratio);
  }
  if (seconds >= 600.0) detail << " (over the 600 s limit)";
  return {ok, detail.str()};
}

Outcome transfer(const ExperimentConfig& config, const Convergence& pretrained) {
  if (!pretrained.ready) return {false, "no pretrained checkpoint"};
  const auto r = transfer_test(pretrained.checkpoint, config);
  int wins = 0;
  std::ostringstream detail;
  detail << r.target << " " << r.metric << ":";
  for (const auto& t : r.trials) {
    wins += t.pretrained_better();
    detail << " seed " << t.seed << " " << fixed(t.pretrained) << " vs " << fixed(t.random);
  }
  detail << " (" << wins << "/" << r.trials.size() << ")";
  return {r.trials.size() == 3 && wins == 3, detail.str()};
}

Outcome ablation(const fs::path& cli, const fs::path& config) {
  const fs::path dir = fs::temp_directory_path() / ("path_engine_ablate_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto table = dir / "table.txt", csv = dir / "ablation.csv";
  const std::string cmd = "\"" + cli.string() + "\" ablate --config \"" + config.string() +
                          "\" --steps 40 --eval-steps 20 --seed 11 --csv \"" + csv.string() + "\" > \"" +
                          table.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream tin(table);
  std::vector<std::string> lines;
  for (std::string l; std::getline(tin, l);) lines.push_back(l);
  if (status != 0) return {false, "ablate exited with status " + std::to_string(status)};

  auto find_row = [&](const std::string& label) -> std::vector<std::string> {
    for (const auto& l : lines) {
      const auto bar = l.find(" | ");
      if (bar == std::string::npos) continue;
      std::string head = l.substr(0, bar);
      while (!head.empty() && head.back() == ' ') head.pop_back();
      if (head.size() >= label.size() && head.compare(head.size() - label.size(), label.size(), label) == 0) {
        std::vector<std::string> cells;
        std::stringstream ss(l.substr(bar + 3));
        for (std::string c; ss >> c;) cells.push_back(c);
        return cells;
      }
    }
    return {};
  };
  const auto share = find_row("Projector Share Type");
  if (share.size() != 6) return {false, "table has " + std::to_string(share.size()) + " share-type columns, want 6"};
  std::map<std::string, int> share_count;
  for (const auto& s : share) {
    if (s != "A" && s != "S" && s != "T") return {false, "share type cell '" + s + "' outside {A, S, T}"};
    ++share_count[s];
  }
  if (share_count.size() != 3) return {false, "not every share type appears"};
  if (find_row("On average").size() != 6) return {false, "On average row does not have 6 values"};
  if (lines.empty() || lines.front().find("seed 11") == std::string::npos) return {false, "seed not recorded"};

  std::ifstream cin(csv);
  std::string header;
  std::getline(cin, header);
  if (header != "variant,share_type,shared_pos_embed,seed,scenario,task,dataset,metric,value")
    return {false, "unexpected CSV header"};
  std::set<std::string> variants, pos_values, seeds;
  std::map<std::string, int> rows_per_variant;
  for (std::string l; std::getline(cin, l);) {
    const auto cells = split(l, ',');
    if (cells.size() != 9) return {false, "malformed CSV row: " + l};
    variants.insert(cells[1] + "/" + cells[2]);
    pos_values.insert(cells[2]);
    seeds.insert(cells[3]);
    ++rows_per_variant[cells[0]];
  }
  if (variants.size() != 6) return {false, std::to_string(variants.size()) + " distinct variants, want 6"};
  if (pos_values.size() != 2) return {false, "positional embedding axis incomplete"};
  if (seeds != std::set<std::string>{"11"}) return {false, "variants do not share one seed"};
  for (const auto& [v, n] : rows_per_variant)
    if (n != rows_per_variant.begin()->second) return {false, "variant " + v + " has a different row count"};
  fs::remove_all(dir);
  return {true, "6 variants (A/S/T x shared/separate), common seed 11, " +
                    std::to_string(rows_per_variant.begin()->second - 1) + " metric rows per variant"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path config_path = argc > 1 ? fs::path(argv[1]) : fs::path(PATH_ENGINE_DESK_CONFIG);
  const fs::path cli = argc > 2 ? fs::path(argv[2]) : fs::path(PATH_ENGINE_CLI);
  suites::SuiteOptions options;
  const auto desk = load_config(config_path);
  desk.validate();
  Convergence pretrained;

  criterion(1, "gradient-correctness", [&] { return from(suites::gradcheck(options)); });
  criterion(2, "sharing-identity", [&] { return from(suites::sharing_identity(options)); });
  criterion(3, "gating-contract", [&] { return from(suites::gating(options)); });
  criterion(4, "reference-constants", [&] { return from(suites::schedule_constants(options)); });
  criterion(5, "protocol-freeze", [&] { return from(suites::freeze_semantics(options)); });
  criterion(6, "metric-oracles", [&] { return from(suites::metric_oracles(options)); });
  criterion(7, "convergence-smoke", [&] { return convergence(desk, pretrained); });
  criterion(8, "transfer-property", [&] { return transfer(desk, pretrained); });
  criterion(9, "ablation-harness", [&] { return ablation(cli, config_path); });
  criterion(10, "dedup-pipeline", [&] { return from(suites::dedup_oracle(options)); });

  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
