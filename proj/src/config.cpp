#include "path_engine/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

using nlohmann::json;

std::string to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::InDataset: return "in";
    case Scenario::OutOfDataset: return "out";
    case Scenario::UnseenTask: return "unseen";
  }
  return "?";
}

Scenario parse_scenario(const std::string& text) {
  if (text == "in") return Scenario::InDataset;
  if (text == "out") return Scenario::OutOfDataset;
  if (text == "unseen") return Scenario::UnseenTask;
  throw ConfigError("unknown scenario '" + text + "' (expected in, out or unseen)");
}

EvalPlan::EvalPlan() {
  unseen.task = "counting";
  unseen.dataset = "crowd";
  unseen.family = TaskFamily::Counting;
  unseen.head.family = TaskFamily::Counting;
  unseen.head.hidden = 16;
  unseen.data_seed = 9001;
}

void EvalPlan::validate(const std::vector<DatasetSpec>& pretraining) const {
  if (scenarios.empty()) throw ConfigError("evaluation.scenarios is empty");
  if (protocols.empty()) throw ConfigError("evaluation.protocols is empty");
  for (auto p : protocols)
    if (p == Protocol::Pretrain) throw ConfigError("evaluation.protocols accepts head, partial and full");
  if (steps < 0) throw ConfigError("evaluation.steps must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("evaluation.lr must be positive");
  if (batch_size < 2) throw ConfigError("evaluation.batch_size must be at least 2");
  if (train_samples < batch_size) throw ConfigError("evaluation.train_samples must be at least batch_size");
  if (test_samples < 2) throw ConfigError("evaluation.test_samples must be at least 2");
  if (pck_threshold < 0.0) throw ConfigError("evaluation.pck_threshold must be non-negative");
  if (partial_k < 0) throw ConfigError("evaluation.partial_k must be non-negative");
  unseen.validate();
  for (const auto& s : pretraining) {
    if (s.family == unseen.family)
      throw ConfigError("unseen-task family " + to_string(unseen.family) + " is also a pretraining task (" + s.dataset +
                        ")");
    if (s.dataset == unseen.dataset) throw ConfigError("unseen dataset name collides with " + s.dataset);
  }
  if (!transfer_dataset.empty()) {
    auto it = std::find_if(pretraining.begin(), pretraining.end(),
                           [&](const DatasetSpec& s) { return s.dataset == transfer_dataset; });
    if (it == pretraining.end()) throw ConfigError("transfer_dataset '" + transfer_dataset + "' is not a pretraining dataset");
  }
}

void ExperimentConfig::validate() const {
  model.backbone.validate();
  model.projector.validate(model.backbone.embed_dim);
  plan.validate();
  if (plan.seed != seed) throw ConfigError("plan seed differs from experiment seed");
  if (plan.num_layers != model.backbone.depth)
    throw ConfigError("layer_decay.num_layers (" + std::to_string(plan.num_layers) + ") must equal backbone depth (" +
                      std::to_string(model.backbone.depth) + ")");
  if (datasets.empty()) throw ConfigError("datasets is empty");
  for (const auto& d : datasets) {
    d.validate();
    d.head.validate(model.backbone.embed_dim);
    if (d.data.height % model.backbone.patch_size != 0 || d.data.width % model.backbone.patch_size != 0)
      throw ConfigError(d.dataset + ": image size must be a multiple of the patch size");
    if (d.family == TaskFamily::ReID && d.batch_per_replica % 2 != 0)
      throw ConfigError(d.dataset + ": reid batches hold identity pairs, batch_per_replica must be even");
  }
  SharingRegistry(task_groups(datasets), model.projector.share_type, model.pos_embed_shared);
  evaluation.validate(datasets);
  evaluation.unseen.head.validate(model.backbone.embed_dim);
  if (evaluation.partial_k > model.backbone.depth) throw ConfigError("evaluation.partial_k exceeds backbone depth");
}

namespace {

/// Object reader that rejects keys it was never asked about.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key '" + key + "' in " + where_);
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(path(key) + " has the wrong type");
      }
    }
  }
  void get_int(const std::string& key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key) + " must be an integer");
      out = v->get<std::int64_t>();
    }
  }
  void get_seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
        throw ConfigError(path(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void expect(const std::string& key, const std::string& value) {
    std::string got = value;
    get(key, got);
    if (got != value) throw ConfigError(path(key) + " must be \"" + value + "\"");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string share_letter(ShareType t) {
  switch (t) {
    case ShareType::All: return "A";
    case ShareType::Dataset: return "S";
    case ShareType::Task: return "T";
  }
  return "?";
}

void read_backbone(const json& j, ModelConfig& m) {
  Reader r(j, "backbone");
  auto& b = m.backbone;
  r.get_int("patch_size", b.patch_size);
  r.get_int("embed_dim", b.embed_dim);
  r.get_int("depth", b.depth);
  r.get_int("heads", b.heads);
  r.get_int("mlp_ratio", b.mlp_ratio);
  r.get_int("canonical_image", b.canonical_image);
  r.get_int("in_channels", b.in_channels);
  r.get("tap_layers", b.tap_layers);
  r.get("shared_pos_embed", m.pos_embed_shared);
}

void read_projector(const json& j, ProjectorConfig& p) {
  Reader r(j, "projector");
  std::string share = share_letter(p.share_type);
  r.get("share_type", share);
  p.share_type = parse_share_type(share);
  r.get("temperature", p.temperature);
  r.get_int("attention_heads", p.attention_heads);
  r.get_int("se_kernel", p.se_kernel);
}

void read_lr_schedule(const json& j, TrainPlan& p) {
  Reader r(j, "lr_schedule");
  r.expect("type", "Step");
  r.get("base_lr", p.base_lr);
  r.get_int("warmup_steps", p.warmup_steps);
  r.get("warmup_lr", p.warmup_lr);
  r.get("lr_mults", p.lr_mults);
  r.get("lr_steps", p.lr_steps);
  r.get_int("max_iter", p.max_iter);
  r.get("backbone_multiplier", p.backbone_multiplier);
  r.get("pos_embed_multiplier", p.pos_embed_multiplier);
}

void read_optimizer(const json& j, OptimizerConfig& o) {
  Reader r(j, "optimizer");
  std::string type = to_string(o.kind);
  r.get("type", type);
  o.kind = parse_optimizer_kind(type);
  r.get("beta1", o.beta1);
  r.get("clip_beta2", o.clip_beta2);
  r.get("clip_threshold", o.clip_threshold);
  r.get("decay_rate", o.decay_rate);
  r.get("eps", o.eps1);
  r.get("scale_parameter", o.scale_parameter);
  r.get("relative_step", o.relative_step);
  r.get("weight_decay", o.weight_decay);
  r.get("momentum", o.momentum);
}

void read_layer_decay(const json& j, TrainPlan& p) {
  Reader r(j, "layer_decay");
  r.get_int("num_layers", p.num_layers);
  r.get("layer_decay_rate", p.layer_decay_rate);
}

void read_head(const json& j, HeadConfig& h, const std::string& where) {
  Reader r(j, where);
  r.get_int("num_outputs", h.num_outputs);
  r.get_int("hidden", h.hidden);
  r.get_int("num_queries", h.num_queries);
  r.get_int("decoder_layers", h.decoder_layers);
  r.get_int("decoder_heads", h.decoder_heads);
  r.get("triplet_margin", h.triplet_margin);
  r.get("no_object_weight", h.no_object_weight);
  if (const json* w = r.find("match_weights")) {
    Reader mw(*w, where + ".match_weights");
    mw.get("cls", h.detection_weights.cls);
    mw.get("l1", h.detection_weights.l1);
    mw.get("iou", h.detection_weights.iou);
  }
}

void read_data(const json& j, DataConfig& d, const std::string& where) {
  Reader r(j, where);
  r.get_int("height", d.height);
  r.get_int("width", d.width);
  r.get_int("num_classes", d.num_classes);
  r.get_int("max_objects", d.max_objects);
  r.get_int("max_blobs", d.max_blobs);
}

DatasetSpec read_dataset(const json& j, const std::string& where) {
  DatasetSpec s;
  Reader r(j, where);
  const json* family = r.find("family");
  if (!family || !family->is_string()) throw ConfigError(where + ".family is required");
  s.family = parse_task_family(family->get<std::string>());
  s.task = to_string(s.family);
  r.get("task", s.task);
  if (const json* name = r.find("dataset"); name && name->is_string())
    s.dataset = name->get<std::string>();
  else
    throw ConfigError(where + ".dataset is required");
  r.get_int("batch_per_replica", s.batch_per_replica);
  r.get_int("replicas", s.replicas);
  r.get("sample_weight", s.sample_weight);
  r.get_int("num_samples", s.num_samples);
  r.get_seed("data_seed", s.data_seed);
  if (const json* d = r.find("data")) read_data(*d, s.data, where + ".data");
  s.head.family = s.family;
  if (s.data.num_classes == 0) s.head.num_outputs = default_num_classes(s.family);
  else s.head.num_outputs = s.data.num_classes;
  if (s.family == TaskFamily::Counting) s.head.num_outputs = 1;
  if (const json* h = r.find("head")) read_head(*h, s.head, where + ".head");
  return s;
}

json write_head(const HeadConfig& h) {
  return {{"num_outputs", h.num_outputs},
          {"hidden", h.hidden},
          {"num_queries", h.num_queries},
          {"decoder_layers", h.decoder_layers},
          {"decoder_heads", h.decoder_heads},
          {"triplet_margin", h.triplet_margin},
          {"no_object_weight", h.no_object_weight},
          {"match_weights", {{"cls", h.detection_weights.cls}, {"l1", h.detection_weights.l1}, {"iou", h.detection_weights.iou}}}};
}

json write_dataset(const DatasetSpec& s) {
  return {{"task", s.task},
          {"dataset", s.dataset},
          {"family", to_string(s.family)},
          {"batch_per_replica", s.batch_per_replica},
          {"replicas", s.replicas},
          {"sample_weight", s.sample_weight},
          {"num_samples", s.num_samples},
          {"data_seed", s.data_seed},
          {"data",
           {{"height", s.data.height},
            {"width", s.data.width},
            {"num_classes", s.data.num_classes},
            {"max_objects", s.data.max_objects},
            {"max_blobs", s.data.max_blobs}}},
          {"head", write_head(s.head)}};
}

void read_evaluation(const json& j, EvalPlan& e) {
  Reader r(j, "evaluation");
  if (const json* v = r.find("scenarios")) {
    if (!v->is_array()) throw ConfigError("evaluation.scenarios must be an array");
    e.scenarios.clear();
    for (const auto& s : *v) e.scenarios.push_back(parse_scenario(s.get<std::string>()));
  }
  if (const json* v = r.find("protocols")) {
    if (!v->is_array()) throw ConfigError("evaluation.protocols must be an array");
    e.protocols.clear();
    for (const auto& s : *v) e.protocols.push_back(parse_protocol(s.get<std::string>()));
  }
  r.get_int("partial_k", e.partial_k);
  r.get_int("steps", e.steps);
  r.get("lr", e.lr);
  r.get_int("batch_size", e.batch_size);
  r.get_int("train_samples", e.train_samples);
  r.get_int("test_samples", e.test_samples);
  r.get("pck_threshold", e.pck_threshold);
  if (const json* u = r.find("unseen")) e.unseen = read_dataset(*u, "evaluation.unseen");
  r.get("transfer_dataset", e.transfer_dataset);
  r.get("transfer_seeds", e.transfer_seeds);
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    Reader r(j, "config");
    r.get_seed("seed", c.seed);
    c.plan.seed = c.seed;
    if (const json* v = r.find("backbone")) read_backbone(*v, c.model);
    if (const json* v = r.find("projector")) read_projector(*v, c.model.projector);
    if (const json* v = r.find("lr_schedule")) read_lr_schedule(*v, c.plan);
    if (const json* v = r.find("optimizer")) read_optimizer(*v, c.plan.optimizer);
    if (const json* v = r.find("layer_decay")) read_layer_decay(*v, c.plan);
    if (const json* v = r.find("datasets")) {
      if (!v->is_array()) throw ConfigError("datasets must be an array");
      for (std::size_t i = 0; i < v->size(); ++i)
        c.datasets.push_back(read_dataset((*v)[i], "datasets[" + std::to_string(i) + "]"));
    }
    if (const json* v = r.find("evaluation")) read_evaluation(*v, c.evaluation);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  const auto& b = c.model.backbone;
  const auto& p = c.plan;
  const auto& o = p.optimizer;
  const auto& e = c.evaluation;
  json datasets = json::array();
  for (const auto& d : c.datasets) datasets.push_back(write_dataset(d));
  json scenarios = json::array(), protocols = json::array();
  for (auto s : e.scenarios) scenarios.push_back(to_string(s));
  for (auto pr : e.protocols) protocols.push_back(to_string(pr));
  json j = {
      {"seed", c.seed},
      {"backbone",
       {{"patch_size", b.patch_size},
        {"embed_dim", b.embed_dim},
        {"depth", b.depth},
        {"heads", b.heads},
        {"mlp_ratio", b.mlp_ratio},
        {"canonical_image", b.canonical_image},
        {"in_channels", b.in_channels},
        {"tap_layers", b.tap_layers},
        {"shared_pos_embed", c.model.pos_embed_shared}}},
      {"projector",
       {{"share_type", share_letter(c.model.projector.share_type)},
        {"temperature", c.model.projector.temperature},
        {"attention_heads", c.model.projector.attention_heads},
        {"se_kernel", c.model.projector.se_kernel}}},
      {"lr_schedule",
       {{"type", "Step"},
        {"base_lr", p.base_lr},
        {"warmup_steps", p.warmup_steps},
        {"warmup_lr", p.warmup_lr},
        {"lr_mults", p.lr_mults},
        {"lr_steps", p.lr_steps},
        {"max_iter", p.max_iter},
        {"backbone_multiplier", p.backbone_multiplier},
        {"pos_embed_multiplier", p.pos_embed_multiplier}}},
      {"optimizer",
       {{"type", to_string(o.kind)},
        {"beta1", o.beta1},
        {"clip_beta2", o.clip_beta2},
        {"clip_threshold", o.clip_threshold},
        {"decay_rate", o.decay_rate},
        {"eps", o.eps1},
        {"scale_parameter", o.scale_parameter},
        {"relative_step", o.relative_step},
        {"weight_decay", o.weight_decay},
        {"momentum", o.momentum}}},
      {"layer_decay", {{"num_layers", p.num_layers}, {"layer_decay_rate", p.layer_decay_rate}}},
      {"datasets", datasets},
      {"evaluation",
       {{"scenarios", scenarios},
        {"protocols", protocols},
        {"partial_k", e.partial_k},
        {"steps", e.steps},
        {"lr", e.lr},
        {"batch_size", e.batch_size},
        {"train_samples", e.train_samples},
        {"test_samples", e.test_samples},
        {"pck_threshold", e.pck_threshold},
        {"unseen", write_dataset(e.unseen)},
        {"transfer_dataset", e.transfer_dataset},
        {"transfer_seeds", e.transfer_seeds}}}};
  return j.dump(2) + "\n";
}

}  // namespace path_engine
