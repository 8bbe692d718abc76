#include <memory>

#include "grad_cases.hpp"
#include "path_engine/heads.hpp"
#include "path_engine/projector.hpp"

namespace path_engine::inline PATH_ENGINE_NS::verify {
namespace {

constexpr std::int64_t kDim = 8;

// Keeps a parameter store (and whatever reads from it) alive for the case.
struct Fixture {
  ParamStore store;
  VitBackbone backbone;
  TaskProjector projector;
  std::unique_ptr<Head> head;
  explicit Fixture(std::uint64_t seed) : store(seed) {}
};

std::vector<GradCheckInput> params_of(ParamStore& store) {
  std::vector<GradCheckInput> out;
  for (auto* p : store.parameters()) out.push_back({p->name, p->var});
  return out;
}

Var random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Var(uniform_tensor(std::move(shape), lo, hi, rng), true);
}

Var contract(const Var& out, Rng& rng) {
  Var w(uniform_tensor(out.shape(), -1.0, 1.0, rng));
  return ops::sum(ops::mul(out, w));
}

GradCase head_case(const std::string& name, HeadConfig config, std::int64_t grid_h, std::int64_t grid_w, Batch batch,
                   std::uint64_t seed, bool training = true) {
  auto fx = std::make_shared<Fixture>(seed);
  fx->head = make_head(config, fx->store, "head.check." + name, kDim, 5);
  Rng rng(seed + 1);
  Var tokens = random_leaf({batch.size(), grid_h * grid_w, kDim}, rng);
  auto inputs = params_of(fx->store);
  inputs.insert(inputs.begin(), {"features", tokens});
  auto b = std::make_shared<Batch>(std::move(batch));
  auto fn = [fx, b, tokens, grid_h, grid_w, training] {
    // Batch-norm running statistics are restored so every probe sees the same state.
    auto saved = fx->store.batch_norm_states();
    Var loss = fx->head->loss({tokens, grid_h, grid_w}, *b, training);
    for (auto& [key, state] : fx->store.batch_norm_states()) state = saved.at(key);
    return loss;
  };
  return {"head_" + name, fn, inputs, {}};
}

Batch images_only(TaskFamily family, std::int64_t b, std::int64_t h, std::int64_t w) {
  Batch batch;
  batch.family = family;
  batch.images = Tensor({b, 3, h, w});
  return batch;
}

}  // namespace

std::vector<GradCase> model_grad_cases(std::uint64_t seed) {
  std::vector<GradCase> cases;
  Rng rng(seed);
  BackboneConfig bc{.patch_size = 2, .embed_dim = kDim, .depth = 2, .heads = 2, .mlp_ratio = 2, .canonical_image = 4};

  {
    auto fx = std::make_shared<Fixture>(seed);
    fx->backbone = VitBackbone(bc, fx->store);
    Var tokens = random_leaf({2, 3, kDim}, rng);
    Var w(uniform_tensor({2, 3, kDim}, -1, 1, rng));
    auto inputs = params_of(fx->store);
    std::erase_if(inputs, [](const GradCheckInput& in) { return in.name.rfind("backbone.blocks.1.", 0) != 0; });
    inputs.insert(inputs.begin(), {"tokens", tokens});
    cases.push_back({"transformer_block", [fx, tokens, w] {
                       return ops::sum(ops::mul(fx->backbone.transformer_block(1, tokens), w));
                     },
                     inputs, {}});
  }
  {
    auto fx = std::make_shared<Fixture>(seed + 1);
    fx->backbone = VitBackbone(bc, fx->store);
    Var image = random_leaf({1, 3, 4, 6}, rng);  // non-canonical: the embedding is resized
    Var w(uniform_tensor({1, 6, kDim}, -1, 1, rng));
    auto inputs = params_of(fx->store);
    inputs.insert(inputs.begin(), {"image", image});
    cases.push_back({"backbone_forward", [fx, image, w] {
                       return ops::sum(ops::mul(fx->backbone.forward_features(image).final.tokens, w));
                     },
                     inputs, {.max_probes = 12}});
  }

  ProjectorConfig pc;
  {
    auto fx = std::make_shared<Fixture>(seed + 2);
    fx->projector = TaskProjector(pc, fx->store, "check", kDim, 1, 3);
    Var f = random_leaf({2, 6, kDim}, rng);
    Var w(uniform_tensor({2, 6, kDim}, -1, 1, rng));
    std::vector<GradCheckInput> inputs{{"f", f},
                                       {"se.weight", fx->store.get("projector.check.1.se.weight").var},
                                       {"se.bias", fx->store.get("projector.check.1.se.bias").var}};
    cases.push_back({"se_block", [fx, f, w] { return ops::sum(ops::mul(fx->projector.se_block(1, f), w)); }, inputs, {}});
  }
  {
    auto fx = std::make_shared<Fixture>(seed + 3);
    fx->projector = TaskProjector(pc, fx->store, "check", kDim, 3, 3);
    // Nonzero gates so the chain is not symmetric in its inputs.
    fx->store.get("projector.check.2.gate").var.mutable_value()[0] = 0.05f;
    fx->store.get("projector.check.3.gate").var.mutable_value()[0] = -0.08f;
    std::vector<FeatureMap> taps;
    auto inputs = params_of(fx->store);
    for (int l = 0; l < 3; ++l) {
      taps.push_back({random_leaf({2, 6, kDim}, rng), 2, 3});
      inputs.insert(inputs.begin(), {"tap" + std::to_string(l + 1), taps.back().tokens});
    }
    Var w(uniform_tensor({2, 6, kDim}, -1, 1, rng));
    cases.push_back({"projector_chain", [fx, taps, w] { return ops::sum(ops::mul(fx->projector.forward(taps).tokens, w)); },
                     inputs, {.max_probes = 24}});
  }
  {
    std::vector<Var> z{random_leaf({3, 4}, rng), random_leaf({3, 4}, rng), random_leaf({3, 4}, rng)};
    std::vector<Var> alpha{random_leaf({1}, rng, -0.2, 0.2), random_leaf({1}, rng, -0.2, 0.2)};
    Var w(uniform_tensor({3, 4}, -1, 1, rng));
    std::vector<GradCheckInput> inputs{{"z1", z[0]}, {"z2", z[1]}, {"z3", z[2]}, {"alpha2", alpha[0]}, {"alpha3", alpha[1]}};
    cases.push_back({"gate_fuse",
                     [z, alpha, w] {
                       std::vector<Var> mu{gate_value(alpha[0], 0.1), gate_value(alpha[1], 0.1)};
                       return ops::sum(ops::mul(gate_fuse(z, mu), w));
                     },
                     inputs,
                     {.eps = 1e-3}});
  }

  {
    Batch b = images_only(TaskFamily::ReID, 4, 4, 4);
    b.ids = {0, 1, 0, 1};
    cases.push_back(head_case("reid", {.family = TaskFamily::ReID, .num_outputs = 3}, 2, 2, b, seed + 10));
  }
  {
    Batch b = images_only(TaskFamily::Pose, 2, 8, 8);
    b.heatmaps = uniform_tensor({2, 3, 8, 8}, 0.0, 1.0, rng);
    cases.push_back(head_case("pose", {.family = TaskFamily::Pose, .num_outputs = 3, .hidden = 4}, 2, 2, b, seed + 11));
  }
  {
    Batch b = images_only(TaskFamily::Parsing, 2, 4, 6);
    for (int i = 0; i < 2 * 4 * 6; ++i) b.pixel_labels.push_back(static_cast<int>(rng.integer(0, 3)));
    cases.push_back(
        head_case("parsing", {.family = TaskFamily::Parsing, .num_outputs = 4, .hidden = 6}, 2, 3, b, seed + 12));
  }
  {
    Batch b = images_only(TaskFamily::Attribute, 3, 4, 4);
    b.attributes = Tensor({3, 5});
    for (auto& v : b.attributes.data()) v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
    cases.push_back(head_case("attribute", {.family = TaskFamily::Attribute, .num_outputs = 5}, 2, 2, b, seed + 13));
  }
  {
    Batch b = images_only(TaskFamily::Detection, 2, 8, 8);
    b.boxes = {{{0.1, 0.2, 0.5, 0.7}, {0.6, 0.1, 0.9, 0.4}}, {{0.3, 0.3, 0.8, 0.9}}};
    b.box_labels = {{0, 0}, {0}};
    cases.push_back(head_case("detection",
                              {.family = TaskFamily::Detection, .num_outputs = 1, .num_queries = 4, .decoder_layers = 1},
                              2, 2, b, seed + 14));
  }
  {
    Batch b = images_only(TaskFamily::Counting, 2, 8, 8);
    b.density = uniform_tensor({2, 1, 8, 8}, 0.0, 0.1, rng);
    cases.push_back(head_case("counting", {.family = TaskFamily::Counting}, 2, 2, b, seed + 15));
  }

  {
    Var pred(Tensor::from({3, 4}, {0.1f, 0.1f, 0.5f, 0.6f, 0.2f, 0.3f, 0.9f, 0.8f, 0.0f, 0.5f, 0.3f, 0.9f}), true);
    Tensor target = Tensor::from({3, 4}, {0.2f, 0.0f, 0.6f, 0.4f, 0.5f, 0.5f, 0.7f, 0.7f, 0.6f, 0.6f, 0.8f, 0.8f});
    Var w(uniform_tensor({3}, -1, 1, rng));
    cases.push_back({"giou_rows", [pred, target, w] { return ops::sum(ops::mul(giou_rows(pred, target), w)); },
                     {{"pred", pred}}, {.eps = 1e-3}});
  }
  {
    Var z = random_leaf({6, 4}, rng);
    std::vector<int> ids{0, 0, 1, 1, 2, 2};
    cases.push_back({"batch_hard_triplet", [z, ids] { return batch_hard_triplet(z, ids, 1.0); }, {{"z", z}},
                     {.eps = 1e-3}});
  }
  (void)contract;
  return cases;
}

}  // namespace path_engine::verify
