#include "path_engine/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::uint64_t out_of_dataset_seed(const DatasetSpec& spec) { return derive_seed(spec.data_seed, "out-of-dataset"); }

std::vector<EvalTarget> eval_targets(const ExperimentConfig& config, Scenario scenario) {
  std::vector<EvalTarget> out;
  switch (scenario) {
    case Scenario::InDataset:
      for (const auto& s : config.datasets) out.push_back({s, s.data_seed, s.num_samples, Split::InEval});
      break;
    case Scenario::OutOfDataset:
      for (const auto& s : config.datasets) out.push_back({s, out_of_dataset_seed(s), 0, Split::OutEval});
      break;
    case Scenario::UnseenTask:
      out.push_back({config.evaluation.unseen, config.evaluation.unseen.data_seed, 0, Split::OutEval});
      break;
  }
  return out;
}

EvalSplits make_splits(const EvalTarget& t, const EvalPlan& plan) {
  const auto& s = t.spec;
  return {generate(s.family, t.seed, plan.train_samples, s.data, t.first_index, t.split),
          generate(s.family, t.seed, plan.test_samples, s.data, t.first_index + plan.train_samples, t.split)};
}

PreparedCorpora prepare_corpora(const ExperimentConfig& config) {
  std::vector<HashCode> eval_codes;
  for (auto scenario : {Scenario::InDataset, Scenario::OutOfDataset})
    for (const auto& t : eval_targets(config, scenario)) {
      const auto splits = make_splits(t, config.evaluation);
      for (const auto* d : {&splits.train, &splits.test})
        for (const auto& s : d->samples) eval_codes.push_back(dhash(s.image));
    }
  PreparedCorpora out;
  for (const auto& spec : config.datasets) {
    auto raw = generate(spec.family, spec.data_seed, spec.num_samples, spec.data);
    std::vector<HashCode> codes;
    for (const auto& s : raw.samples) codes.push_back(dhash(s.image));
    auto result = dedup(codes, eval_codes);
    out.datasets.push_back(select(raw, result.kept));
    out.dedup.push_back(std::move(result));
  }
  return out;
}

namespace {

struct FeatureCache {
  Tensor tokens;  // [N, T, D]
  std::int64_t grid_h = 0, grid_w = 0;

  FeatureMap gather(const std::vector<std::size_t>& indices) const {
    const auto t = tokens.dim(1), d = tokens.dim(2);
    Tensor out({static_cast<std::int64_t>(indices.size()), t, d});
    const auto row = t * d;
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(tokens.data().begin() + static_cast<std::int64_t>(indices[i]) * row, row,
                  out.data().begin() + static_cast<std::int64_t>(i) * row);
    return {Var(std::move(out)), grid_h, grid_w};
  }
};

std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::int64_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(size)) {
    std::vector<std::size_t> c;
    for (std::size_t j = i; j < std::min(n, i + static_cast<std::size_t>(size)); ++j) c.push_back(j);
    out.push_back(std::move(c));
  }
  return out;
}

FeatureCache cache_features(const EvalModel& model, const SyntheticDataset& data, std::int64_t batch) {
  NoGradGuard guard;
  FeatureCache cache;
  std::vector<real> all;
  std::int64_t t = 0, d = 0;
  for (const auto& idx : chunks(data.size(), batch)) {
    const auto f = model.features(Var(data.collate(idx).images));
    cache.grid_h = f.grid_h;
    cache.grid_w = f.grid_w;
    t = f.tokens.dim(1);
    d = f.tokens.dim(2);
    const auto v = f.tokens.value().data();
    all.insert(all.end(), v.begin(), v.end());
  }
  cache.tokens = Tensor({static_cast<std::int64_t>(data.size()), t, d}, std::move(all));
  return cache;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) { return to_matrix(t.reshaped({t.dim(0), t.numel() / t.dim(0)})); }

}  // namespace

std::vector<Metric> evaluate_model(const EvalModel& model, const SyntheticDataset& test, const EvalPlan& plan) {
  NoGradGuard guard;
  const auto family = model.head->family();
  const auto batches = chunks(test.size(), plan.batch_size);
  switch (family) {
    case TaskFamily::ReID: {
      const auto& head = dynamic_cast<const ReidHead&>(*model.head);
      Matrix emb;
      for (const auto& idx : batches) {
        auto z = head.embed(model.features(Var(test.collate(idx).images)), false);
        for (auto& r : rows_of(z.value())) emb.push_back(std::move(r));
      }
      Matrix query, gallery;
      std::vector<int> qid, gid;
      std::set<int> seen;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const int id = test.samples[i].id;
        if (seen.insert(id).second) {
          query.push_back(emb[i]);
          qid.push_back(id);
        } else {
          gallery.push_back(emb[i]);
          gid.push_back(id);
        }
      }
      const auto s = reid_map_top1(query, qid, gallery, gid);
      return {{"mAP", s.map, true}, {"Top1", s.top1, true}};
    }
    case TaskFamily::Pose: {
      const auto& head = dynamic_cast<const PoseHead&>(*model.head);
      std::vector<std::vector<Keypoint>> pred, gt;
      for (const auto& idx : batches) {
        const auto batch = test.collate(idx);
        auto kp = heatmap_argmax(head.forward(model.features(Var(batch.images))).value());
        pred.insert(pred.end(), kp.begin(), kp.end());
        gt.insert(gt.end(), batch.keypoints.begin(), batch.keypoints.end());
      }
      const auto s = pck_epe(pred, gt, plan.pck_threshold);
      return {{"PCK", s.pck, true}, {"EPE", s.epe, false}};
    }
    case TaskFamily::Parsing: {
      const auto& head = dynamic_cast<const ParsingHead&>(*model.head);
      const auto h = test.config.height, w = test.config.width;
      std::vector<int> pred, gt;
      std::int64_t classes = 0;
      for (const auto& idx : batches) {
        const auto batch = test.collate(idx);
        const auto logits = head.forward(model.features(Var(batch.images)), h, w).value();
        classes = logits.dim(1);
        for (std::int64_t n = 0; n < logits.dim(0); ++n)
          for (std::int64_t i = 0; i < h * w; ++i) {
            int best = 0;
            for (std::int64_t c = 1; c < classes; ++c)
              if (logits[(n * classes + c) * h * w + i] > logits[(n * classes + best) * h * w + i]) best = static_cast<int>(c);
            pred.push_back(best);
          }
        gt.insert(gt.end(), batch.pixel_labels.begin(), batch.pixel_labels.end());
      }
      const auto s = miou_pacc(pred, gt, classes);
      return {{"mIoU", s.miou, true}, {"pACC", s.pacc, true}};
    }
    case TaskFamily::Attribute: {
      const auto& head = dynamic_cast<const AttributeHead&>(*model.head);
      Matrix probs, gt;
      for (const auto& idx : batches) {
        const auto batch = test.collate(idx);
        for (auto& r : rows_of(head.probabilities(model.features(Var(batch.images))).value())) probs.push_back(std::move(r));
        for (auto& r : rows_of(batch.attributes)) gt.push_back(std::move(r));
      }
      return {{"mA", attribute_ma(probs, gt).ma, true}};
    }
    case TaskFamily::Detection: {
      const auto& head = dynamic_cast<const DetectionHead&>(*model.head);
      std::vector<std::vector<Detection>> det;
      std::vector<std::vector<Box>> boxes;
      std::vector<std::vector<int>> labels;
      for (const auto& idx : batches) {
        const auto batch = test.collate(idx);
        const auto out = head.forward(model.features(Var(batch.images)));
        const auto prob = ops::softmax(out.class_logits, 2).value();
        const auto& bx = out.boxes.value();
        const auto q = prob.dim(1), c1 = prob.dim(2);
        for (std::int64_t n = 0; n < prob.dim(0); ++n) {
          std::vector<Detection> d;
          for (std::int64_t i = 0; i < q; ++i) {
            const real* p = prob.data().data() + (n * q + i) * c1;
            int best = 0;
            for (std::int64_t c = 1; c + 1 < c1; ++c)
              if (p[c] > p[best]) best = static_cast<int>(c);
            const real* b = bx.data().data() + (n * q + i) * 4;
            d.push_back({{b[0], b[1], b[2], b[3]}, static_cast<double>(p[best]), best});
          }
          det.push_back(std::move(d));
        }
        boxes.insert(boxes.end(), batch.boxes.begin(), batch.boxes.end());
        labels.insert(labels.end(), batch.box_labels.begin(), batch.box_labels.end());
      }
      const auto ap = detection_ap50(det, boxes, labels);
      return {{"AP50", ap.value_or(std::nan("")), true}};
    }
    case TaskFamily::Counting: {
      const auto& head = dynamic_cast<const CountingHead&>(*model.head);
      std::vector<double> pred, gt;
      for (const auto& idx : batches) {
        const auto batch = test.collate(idx);
        const auto density = head.forward(model.features(Var(batch.images)), false).value();
        const auto per = density.numel() / density.dim(0);
        for (std::int64_t n = 0; n < density.dim(0); ++n) {
          double sum = 0.0;
          for (std::int64_t i = 0; i < per; ++i) sum += density[n * per + i];
          pred.push_back(sum);
        }
        gt.insert(gt.end(), batch.counts.begin(), batch.counts.end());
      }
      const auto s = counting_errors(pred, gt);
      return {{"MAE", s.mae, false}, {"RMSE", s.rmse, false}};
    }
  }
  throw ConfigError("unsupported family");
}

EvalModel build_eval_model(const Checkpoint& pretrained, const ExperimentConfig& config, const EvalTarget& target,
                           std::uint64_t seed) {
  return discard_projectors(pretrained.params, config.model.backbone, target.spec.head,
                            SharingRegistry::head_prefix(target.spec.task, target.spec.dataset), seed);
}

Checkpoint random_backbone(const ExperimentConfig& config, std::uint64_t seed) {
  ParamStore store(seed);
  VitBackbone backbone(config.model.backbone, store);
  return snapshot(store);
}

FinetuneResult finetune(EvalModel& model, const EvalTarget& target, const EvalSplits& splits, Protocol protocol,
                        const ExperimentConfig& config, std::uint64_t seed) {
  const auto& eval = config.evaluation;
  auto& store = *model.store;
  const auto mask = freeze_mask(protocol, store.names(), config.model.backbone.depth, eval.partial_k);
  apply_freeze(store, mask);
  Optimizer optimizer(config.plan.optimizer, mask.zero_weight_decay);

  FinetuneResult result;
  result.before = snapshot(store);
  const bool cached = protocol == Protocol::HeadFt;
  FeatureCache cache;
  if (cached) cache = cache_features(model, splits.train, eval.batch_size);

  BatchSampler sampler(splits.train, derive_seed(seed, "finetune/" + target.spec.dataset));
  for (std::int64_t step = 0; step < eval.steps; ++step) {
    const auto idx = sampler.next_indices(eval.batch_size);
    const auto batch = splits.train.collate(idx);
    store.zero_grad();
    const FeatureMap f = cached ? cache.gather(idx) : model.features(Var(batch.images));
    auto loss = model.head->loss(f, batch, true);
    const double value = loss.item();
    if (!std::isfinite(value))
      throw DivergenceError("non-finite finetuning loss on " + target.spec.dataset + " at step " + std::to_string(step),
                            static_cast<long>(step));
    loss.backward();
    optimizer.step(store, [&](const Parameter& p) { return eval.lr * param_lr_scale(p, config.plan); });
    result.losses.push_back(value);
  }
  result.after = snapshot(store);
  result.optimizer_states = optimizer.states();

  result.row.task = target.spec.task;
  result.row.dataset = target.spec.dataset;
  result.row.family = target.spec.family;
  result.row.metrics = evaluate_model(model, splits.test, eval);
  if (!result.losses.empty()) {
    const auto tenth = std::max<std::size_t>(1, result.losses.size() / 10);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < tenth; ++i) {
      a += result.losses[i];
      b += result.losses[result.losses.size() - 1 - i];
    }
    result.row.first_loss = a / static_cast<double>(tenth);
    result.row.last_loss = b / static_cast<double>(tenth);
  }
  return result;
}

EvalReport run_evaluation(const Checkpoint& pretrained, const ExperimentConfig& config, Scenario scenario,
                          Protocol protocol) {
  const auto& eval = config.evaluation;
  if (std::find(eval.scenarios.begin(), eval.scenarios.end(), scenario) == eval.scenarios.end())
    throw ConfigError("scenario '" + to_string(scenario) + "' is not enabled in evaluation.scenarios");
  if (std::find(eval.protocols.begin(), eval.protocols.end(), protocol) == eval.protocols.end())
    throw ConfigError("protocol '" + to_string(protocol) + "' is not enabled in evaluation.protocols");
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  report.scenario = scenario;
  report.protocol = protocol;
  report.seed = config.seed;
  report.backbone_frozen = protocol == Protocol::HeadFt;
  for (const auto& target : eval_targets(config, scenario)) {
    const auto seed = derive_seed(config.seed, "eval/" + to_string(scenario) + "/" + target.spec.dataset);
    auto model = build_eval_model(pretrained, config, target, seed);
    report.rows.push_back(finetune(model, target, make_splits(target, eval), protocol, config, seed).row);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_csv_header() { return "scenario,protocol,seed,backbone_frozen,task,dataset,family,metric,value\n"; }

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (const auto& row : r.rows)
    for (const auto& m : row.metrics)
      os << to_string(r.scenario) << "," << to_string(r.protocol) << "," << r.seed << ","
         << (r.backbone_frozen ? "true" : "false") << "," << row.task << "," << row.dataset << ","
         << to_string(row.family) << "," << m.name << "," << m.value << "\n";
  return os.str();
}

std::string format_report(const EvalReport& r) {
  static const std::map<Scenario, std::string> scenario_names{{Scenario::InDataset, "in-dataset"},
                                                              {Scenario::OutOfDataset, "out-of-dataset"},
                                                              {Scenario::UnseenTask, "unseen-task"}};
  std::ostringstream os;
  os << scenario_names.at(r.scenario) << " evaluation, " << to_string(r.protocol) << " finetuning"
     << (r.backbone_frozen ? " (backbone frozen)" : "") << ", seed " << r.seed << "\n";

  std::size_t depth = 0;
  for (const auto& row : r.rows) depth = std::max(depth, row.metrics.size());
  std::vector<std::vector<std::string>> lines(3 + depth);
  lines[0].push_back("Task");
  lines[1].push_back("Dataset");
  lines[2].push_back("");
  for (std::size_t m = 0; m < depth; ++m) lines[3 + m].push_back(m == 0 ? "Primary" : "");
  auto fmt = [](double v) {
    if (std::isnan(v)) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };
  std::string previous;
  for (const auto& row : r.rows) {
    lines[0].push_back(row.task == previous ? "" : row.task);
    previous = row.task;
    lines[1].push_back(row.dataset);
    lines[2].push_back(r.scenario == Scenario::OutOfDataset ? "[out]" : "");
    for (std::size_t m = 0; m < depth; ++m)
      lines[3 + m].push_back(m < row.metrics.size() ? row.metrics[m].name + " " + fmt(row.metrics[m].value) : "");
  }
  if (r.scenario != Scenario::OutOfDataset) lines.erase(lines.begin() + 2);
  std::vector<std::size_t> width(r.rows.size() + 1, 0);
  for (const auto& l : lines)
    for (std::size_t c = 0; c < l.size(); ++c) width[c] = std::max(width[c], l[c].size());
  for (const auto& l : lines) {
    for (std::size_t c = 0; c < l.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(width[c])) << l[c];
      os << (c == 0 ? " | " : c + 1 < l.size() ? "  " : "");
    }
    os << "\n";
  }
  os << "wall time " << std::fixed << std::setprecision(1) << r.seconds << " s\n";
  return os.str();
}

TransferReport transfer_test(const Checkpoint& pretrained, const ExperimentConfig& config) {
  const auto& eval = config.evaluation;
  const DatasetSpec* spec = nullptr;
  for (const auto& s : config.datasets)
    if (s.dataset == eval.transfer_dataset) spec = &s;
  if (!spec) {
    for (const auto& s : config.datasets)
      if (!spec && (s.family == TaskFamily::Attribute || s.family == TaskFamily::ReID)) spec = &s;
    if (!spec) spec = &config.datasets.front();
  }
  const EvalTarget target{*spec, out_of_dataset_seed(*spec), 0, Split::OutEval};
  const auto splits = make_splits(target, eval);

  TransferReport report;
  report.target = spec->dataset + " (held-out seed)";
  for (auto seed : eval.transfer_seeds) {
    const auto head_seed = derive_seed(seed, "transfer/head");
    auto trained = build_eval_model(pretrained, config, target, head_seed);
    auto a = finetune(trained, target, splits, Protocol::HeadFt, config, seed).row;
    auto fresh = build_eval_model(random_backbone(config, derive_seed(seed, "transfer/backbone")), config, target, head_seed);
    auto b = finetune(fresh, target, splits, Protocol::HeadFt, config, seed).row;
    report.metric = a.primary().name;
    report.trials.push_back({seed, a.primary().value, b.primary().value, a.primary().higher_is_better});
  }
  return report;
}

}  // namespace path_engine
