#include "path_engine/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <thread>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

void DatasetSpec::validate() const {
  if (batch_per_replica < 1) throw ConfigError(dataset + ": batch_per_replica must be at least 1");
  if (replicas < 1) throw ConfigError(dataset + ": replicas must be at least 1");
  if (!(sample_weight >= 0.0) || !std::isfinite(sample_weight))
    throw ConfigError(dataset + ": sample_weight must be finite and non-negative");
  if (num_samples < 1) throw ConfigError(dataset + ": num_samples must be at least 1");
  if (head.family != family) throw ConfigError(dataset + ": head family differs from dataset family");
  data.validate(family);
}

double loss_weight(const DatasetSpec& spec) {
  return spec.sample_weight * static_cast<double>(spec.batch_per_replica) * static_cast<double>(spec.replicas);
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "SGD" : "Adafactor_dev"; }

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "SGD" || text == "sgd") return OptimizerKind::Sgd;
  if (text == "Adafactor_dev" || text == "Adafactor" || text == "adafactor") return OptimizerKind::Adafactor;
  throw ConfigError("unknown optimizer '" + text + "'");
}

void OptimizerConfig::validate() const {
  if (scale_parameter) throw ConfigError("optimizer.scale_parameter=true is not supported");
  if (relative_step) throw ConfigError("optimizer.relative_step=true is not supported");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer.beta1 must lie in [0, 1)");
  if (clip_beta2 <= 0.0 || clip_beta2 >= 1.0) throw ConfigError("optimizer.clip_beta2 must lie in (0, 1)");
  if (clip_threshold <= 0.0) throw ConfigError("optimizer.clip_threshold must be positive");
  if (decay_rate >= 0.0) throw ConfigError("optimizer.decay_rate must be negative");
  if (weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optimizer.momentum must lie in [0, 1)");
}

void TrainPlan::validate() const {
  if (max_iter < 0) throw ConfigError("max_iter must be non-negative");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (!(base_lr >= 0.0) || !(warmup_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (lr_steps.size() != lr_mults.size()) throw ConfigError("lr_steps and lr_mults must have equal length");
  for (std::size_t i = 0; i < lr_steps.size(); ++i) {
    if (i > 0 && lr_steps[i] <= lr_steps[i - 1]) throw ConfigError("lr_steps must be strictly increasing");
    if (lr_steps[i] >= max_iter) throw ConfigError("every lr_step must be below max_iter");
    if (lr_mults[i] < 0.0) throw ConfigError("lr_mults must be non-negative");
  }
  if (num_layers < 1) throw ConfigError("layer_decay.num_layers must be at least 1");
  if (layer_decay_rate <= 0.0 || layer_decay_rate > 1.0) throw ConfigError("layer_decay_rate must lie in (0, 1]");
  if (backbone_multiplier < 0.0 || pos_embed_multiplier < 0.0) throw ConfigError("lr multipliers must be non-negative");
  optimizer.validate();
}

double lr_at(std::int64_t step, const TrainPlan& plan) {
  step = std::max<std::int64_t>(step, 0);
  if (step < plan.warmup_steps)
    return plan.base_lr +
           (plan.warmup_lr - plan.base_lr) * (static_cast<double>(step) / static_cast<double>(plan.warmup_steps));
  double mult = 1.0;
  for (std::size_t i = 0; i < plan.lr_steps.size(); ++i)
    if (step >= plan.lr_steps[i]) mult = plan.lr_mults[i];
  return plan.warmup_lr * mult;
}

double layer_decay_multiplier(int depth_index, std::int64_t num_layers, double rate) {
  if (depth_index < 0 || depth_index > num_layers + 1)
    throw ConfigError("depth index " + std::to_string(depth_index) + " outside [0, " + std::to_string(num_layers + 1) +
                      "]");
  return std::pow(rate, static_cast<double>(num_layers + 1 - depth_index));
}

double param_lr_scale(const Parameter& p, const TrainPlan& plan) {
  double scale = layer_decay_multiplier(p.depth_index, plan.num_layers, plan.layer_decay_rate);
  if (p.name.rfind(VitBackbone::kSharedPosEmbed, 0) == 0) return scale * plan.pos_embed_multiplier;
  if (p.name.rfind("backbone.", 0) == 0) return scale * plan.backbone_multiplier;
  return scale;
}

// -- optimizer ----------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig config, bool zero_weight_decay)
    : config_(config), zero_weight_decay_(zero_weight_decay) {
  config_.validate();
}

double Optimizer::weight_decay_for(const Parameter& p) const {
  return zero_weight_decay_ || !p.weight_decay ? 0.0 : config_.weight_decay;
}

void Optimizer::step(ParamStore& store, const std::function<double(const Parameter&)>& lr_for) {
  for (auto* p : store.parameters()) {
    if (!p->trainable || !p->var.has_grad()) continue;
    auto& s = states_[p->name];
    s.weight_decay = weight_decay_for(*p);
    ++s.steps;
    const double lr = lr_for(*p);
    if (config_.kind == OptimizerKind::Sgd)
      sgd(*p, s, lr);
    else
      adafactor(*p, s, lr);
  }
}

void Optimizer::sgd(Parameter& p, State& s, double lr) {
  auto w = p.var.mutable_value().data();
  const auto g = p.var.grad();
  const auto n = w.size();
  if (config_.momentum > 0.0 && s.exp_avg.empty()) s.exp_avg.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(g[i]) + s.weight_decay * static_cast<double>(w[i]);
    if (config_.momentum > 0.0) d = s.exp_avg[i] = config_.momentum * s.exp_avg[i] + d;
    w[i] = static_cast<real>(static_cast<double>(w[i]) - lr * d);
  }
}

void Optimizer::adafactor(Parameter& p, State& s, double lr) {
  auto w = p.var.mutable_value().data();
  const auto g = p.var.grad();
  const auto n = w.size();
  const auto& shape = p.var.shape();
  const bool factored = shape.size() >= 2;
  const std::size_t rows = factored ? static_cast<std::size_t>(shape[0]) : 1;
  const std::size_t cols = factored ? n / rows : n;
  const double beta2 = std::min(1.0 - std::pow(static_cast<double>(s.steps), config_.decay_rate), config_.clip_beta2);

  std::vector<double> update(n);
  if (factored) {
    if (s.row.empty()) {
      s.row.assign(rows, 0.0);
      s.col.assign(cols, 0.0);
    }
    std::vector<double> row_mean(rows, 0.0), col_mean(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double g2 = static_cast<double>(g[r * cols + c]) * g[r * cols + c] + config_.eps1;
        row_mean[r] += g2;
        col_mean[c] += g2;
      }
    double row_avg = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      s.row[r] = beta2 * s.row[r] + (1.0 - beta2) * row_mean[r] / static_cast<double>(cols);
      row_avg += s.row[r];
    }
    row_avg /= static_cast<double>(rows);
    for (std::size_t c = 0; c < cols; ++c)
      s.col[c] = beta2 * s.col[c] + (1.0 - beta2) * col_mean[c] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double rf = 1.0 / std::sqrt(s.row[r] / row_avg);
      for (std::size_t c = 0; c < cols; ++c) update[r * cols + c] = rf / std::sqrt(s.col[c]) * g[r * cols + c];
    }
  } else {
    if (s.exp_avg_sq.empty()) s.exp_avg_sq.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double g2 = static_cast<double>(g[i]) * g[i] + config_.eps1;
      s.exp_avg_sq[i] = beta2 * s.exp_avg_sq[i] + (1.0 - beta2) * g2;
      update[i] = g[i] / std::sqrt(s.exp_avg_sq[i]);
    }
  }
  double ss = 0.0;
  for (double u : update) ss += u * u;
  const double rms = std::sqrt(ss / static_cast<double>(n));
  const double denom = std::max(1.0, rms / config_.clip_threshold);
  if (config_.beta1 > 0.0 && s.exp_avg.empty()) s.exp_avg.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double u = update[i] / denom * lr;
    if (config_.beta1 > 0.0) u = s.exp_avg[i] = config_.beta1 * s.exp_avg[i] + (1.0 - config_.beta1) * u;
    double v = static_cast<double>(w[i]);
    v -= s.weight_decay * lr * v;
    w[i] = static_cast<real>(v - u);
  }
}

// -- worker -------------------------------------------------------------------

Worker::Worker(int index, const DatasetSpec& spec, const ModelConfig& model, const SharingRegistry& registry,
               const SyntheticDataset& data, const TrainPlan& plan)
    : index_(index),
      spec_(spec),
      store_(std::make_unique<ParamStore>(plan.seed, registry.resolver())),
      pos_embed_name_(registry.pos_embed_name(index)),
      sampler_(data, derive_seed(plan.seed, "sampler/" + spec.dataset)),
      optimizer_(plan.optimizer) {
  spec_.validate();
  const auto depth = static_cast<int>(model.backbone.depth) + 1;
  backbone_ = VitBackbone(model.backbone, *store_, {pos_embed_name_});
  projector_ = TaskProjector(model.projector, *store_, registry.projector_group(index), model.backbone.embed_dim,
                             static_cast<std::int64_t>(model.backbone.resolved_taps().size()), depth);
  head_ = make_head(spec_.head, *store_, SharingRegistry::head_prefix(spec_.task, spec_.dataset),
                    model.backbone.embed_dim, depth);
}

double Worker::loss_on(const Batch& batch, double weight) {
  Var images(batch.images);
  auto taps = backbone_.forward_features(images, pos_embed_name_).taps;
  auto loss = head_->loss(projector_.forward(taps), batch, true);
  const double value = loss.item();
  if (!std::isfinite(value)) return value;
  ops::scale(loss, static_cast<real>(weight)).backward();
  return value;
}

double Worker::local_step(std::int64_t step) {
  store_->zero_grad();
  const double weight = loss_weight(spec_) / static_cast<double>(spec_.replicas);
  double total = 0.0;
  for (std::int64_t r = 0; r < spec_.replicas; ++r) {
    const double l = loss_on(sampler_.next(spec_.batch_per_replica), weight);
    if (!std::isfinite(l))
      throw DivergenceError("non-finite loss on dataset " + spec_.dataset + " at step " + std::to_string(step),
                            static_cast<long>(step));
    total += l;
  }
  return total / static_cast<double>(spec_.replicas);
}

// -- synchronization ----------------------------------------------------------

std::vector<real> synced_mean(const std::vector<std::span<const real>>& grads) {
  if (grads.empty()) return {};
  const auto n = grads[0].size();
  for (const auto& g : grads)
    if (g.size() != n) throw ProtocolError("gradient extents differ across workers");
  std::vector<real> out(n);
  std::vector<real> vals(grads.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t w = 0; w < grads.size(); ++w) vals[w] = grads[w][i];
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (real v : vals) acc += static_cast<double>(v);
    out[i] = static_cast<real>(acc / static_cast<double>(vals.size()));
  }
  return out;
}

void synchronize(std::vector<Worker*>& workers, const SharingRegistry& registry) {
  std::map<int, Worker*> by_index;
  for (auto* w : workers) by_index[w->index()] = w;
  std::set<std::string> names;
  for (auto* w : workers)
    for (const auto& n : w->store().names()) names.insert(n);

  for (const auto& name : names) {
    const auto scope = registry.scope_of(name);
    if (scope.kind == ScopeKind::Dataset) continue;
    const auto members = registry.sync_set(scope);
    std::vector<Parameter*> params;
    for (int m : members) {
      auto it = by_index.find(m);
      if (it == by_index.end()) throw ProtocolError("worker " + std::to_string(m) + " missing at the barrier");
      auto* p = it->second->store().find(name);
      if (!p) throw ProtocolError("worker " + std::to_string(m) + " does not hold shared parameter '" + name + "'");
      params.push_back(p);
    }
    const bool any = std::any_of(params.begin(), params.end(), [](Parameter* p) { return p->var.has_grad(); });
    if (!any) continue;
    std::vector<std::span<const real>> grads;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->var.has_grad())
        throw ProtocolError("worker " + std::to_string(members[i]) + " sent no gradient for shared parameter '" +
                            name + "'");
      grads.push_back(params[i]->var.grad());
    }
    const auto mean = synced_mean(grads);
    for (auto* p : params) {
      auto& g = p->var.node()->grad();
      std::copy(mean.begin(), mean.end(), g.begin());
    }
  }
}

// -- trainer ------------------------------------------------------------------

std::vector<TaskDatasets> task_groups(const std::vector<DatasetSpec>& specs) {
  std::vector<TaskDatasets> out;
  for (const auto& s : specs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const TaskDatasets& t) { return t.task == s.task; });
    if (it == out.end()) {
      out.push_back({s.task, {s.dataset}});
    } else {
      it->datasets.push_back(s.dataset);
    }
  }
  return out;
}

Trainer::Trainer(const ModelConfig& model, std::vector<DatasetSpec> specs, const TrainPlan& plan,
                 std::vector<SyntheticDataset> corpora, ShareType share)
    : model_(model),
      specs_(std::move(specs)),
      plan_(plan),
      corpora_(std::move(corpora)),
      registry_(task_groups(specs_), share, model.pos_embed_shared) {
  plan_.validate();
  model_.backbone.validate();
  if (plan_.num_layers != model_.backbone.depth)
    throw ConfigError("layer_decay.num_layers (" + std::to_string(plan_.num_layers) + ") differs from backbone depth (" +
                      std::to_string(model_.backbone.depth) + ")");
  if (corpora_.size() != specs_.size()) throw ConfigError("one corpus per dataset required");
  for (const auto& w : registry_.workers()) {
    // Worker order follows the registry; find the matching spec.
    std::size_t i = 0;
    while (specs_[i].dataset != w.dataset) ++i;
    if (corpora_[i].family != specs_[i].family) throw ConfigError(specs_[i].dataset + ": corpus family mismatch");
    workers_.push_back(std::make_unique<Worker>(w.index, specs_[i], model_, registry_, corpora_[i], plan_));
  }
}

std::vector<Worker*> Trainer::workers() {
  std::vector<Worker*> out;
  for (auto& w : workers_) out.push_back(w.get());
  return out;
}

std::vector<double> Trainer::round(std::int64_t step, int contexts) {
  const auto n = workers_.size();
  std::vector<double> losses(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  auto run_one = [&](std::size_t i) {
    try {
      losses[i] = workers_[i]->local_step(step);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  contexts = std::clamp(contexts, 1, static_cast<int>(n));
  if (contexts == 1) {
    for (std::size_t i = 0; i < n; ++i) run_one(i);
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < contexts; ++t)
      threads.emplace_back([&, t] {
        for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(contexts)) run_one(i);
      });
    for (auto& th : threads) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  auto all = workers();
  synchronize(all, registry_);
  const double base = lr_at(step, plan_);
  for (auto* w : all) w->optimizer().step(w->store(), [&](const Parameter& p) { return base * param_lr_scale(p, plan_); });
  return losses;
}

PretrainResult Trainer::run(const PretrainOptions& options) {
  PretrainResult result;
  const auto start = std::chrono::steady_clock::now();
  std::ofstream csv;
  if (!options.log_path.empty()) {
    const bool fresh = !std::filesystem::exists(options.log_path) || std::filesystem::file_size(options.log_path) == 0;
    csv.open(options.log_path, std::ios::app);
    if (!csv) throw Error("cannot open log " + options.log_path.string());
    if (fresh) csv << "step,dataset,loss,lr\n";
    csv << std::setprecision(9);
  }
  for (std::int64_t step = 0; step < plan_.max_iter; ++step) {
    const auto losses = round(step, options.contexts);
    const double lr = lr_at(step, plan_);
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      result.log.push_back({step, workers_[i]->spec().dataset, losses[i], lr});
      if (csv.is_open()) csv << step << "," << workers_[i]->spec().dataset << "," << losses[i] << "," << lr << "\n";
    }
    if (options.on_step) {
      auto all = workers();
      options.on_step(step, all);
    }
    result.steps = step + 1;
  }
  result.checkpoint = checkpoint();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  for (const auto& w : workers_) merge_into(c, w->store());
  return c;
}

}  // namespace path_engine
