#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/heads.hpp"
#include "path_engine/matching.hpp"

using namespace test;

namespace {

constexpr std::int64_t kDim = 8;

FeatureMap features(std::int64_t b, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  return {leaf({b, h * w, kDim}, seed), h, w};
}

std::vector<int> zero_ids(std::int64_t n) { return std::vector<int>(static_cast<std::size_t>(n), 0); }

Box random_box(Rng& rng) {
  const double x0 = rng.uniform(0, 0.8), y0 = rng.uniform(0, 0.8);
  return {x0, y0, x0 + rng.uniform(0.05, 0.2), y0 + rng.uniform(0.05, 0.2)};
}

}  // namespace

TEST_CASE("triplet loss examples") {
  CHECK(triplet_loss(0.2, 0.5, 0.3) == 0.0);
  CHECK(triplet_loss(0.9, 0.3, 0.3) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(triplet_loss(0.4, 0.4, 0.0) == 0.0);
}

TEST_CASE("batch-hard triplet picks the farthest positive and nearest negative") {
  // 1-D embeddings: ids {0,0,1,1} at positions {0, 1, 3, 5}.
  Var z(Tensor::from({4, 1}, {0, 1, 3, 5}));
  // anchors: 0 -> dp 1, dn 3; 1 -> dp 1, dn 2; 3 -> dp 2, dn 2; 5 -> dp 2, dn 4.
  const double expected = (std::max(1 - 3 + 1.0, 0.0) + std::max(1 - 2 + 1.0, 0.0) + std::max(2 - 2 + 1.0, 0.0) +
                           std::max(2 - 4 + 1.0, 0.0)) / 4.0;
  CHECK(batch_hard_triplet(z, {0, 0, 1, 1}, 1.0).item() == doctest::Approx(expected).epsilon(1e-5));
  CHECK(batch_hard_triplet(z, {0, 1, 2, 3}, 1.0).item() == 0.0f);
}

TEST_CASE("reid head neck") {
  ParamStore store(1);
  ReidHead head({.family = TaskFamily::ReID, .num_outputs = 5}, store, "head.reid.a", kDim, 5);
  auto p = features(4, 2, 3, 1);
  auto pooled = p.pooled();
  check_close(head.embed(p, false).value(), pooled.value(), 1e-5);

  auto z = head.embed(p, true);
  for (std::int64_t c = 0; c < kDim; ++c) {
    double mean = 0.0;
    for (std::int64_t b = 0; b < 4; ++b) mean += z.value()[b * kDim + c];
    CHECK(std::fabs(mean / 4) < 1e-5);
  }
  CHECK(head.logits(z).shape() == Shape{4, 5});
  CHECK_THROWS_AS(head.embed(features(1, 2, 3, 2), true), DegenerateBatchError);
  CHECK(head.layer_kinds() == std::vector<std::string>{"mean_pool", "batch_norm", "linear"});
}

TEST_CASE("pose head geometry and loss") {
  ParamStore store(2);
  PoseHead head({.family = TaskFamily::Pose, .num_outputs = 3, .hidden = 8}, store, "head.pose.a", kDim, 5);
  auto p = features(2, 8, 6, 3);
  auto heat = head.forward(p);
  CHECK(heat.shape() == Shape{2, 3, 32, 24});

  Batch batch{.family = TaskFamily::Pose, .images = Tensor({2, 3, 128, 96})};
  batch.heatmaps = heat.value();
  CHECK(head.loss(p, batch, true).item() == 0.0f);
  batch.heatmaps = Tensor({2, 3, 16, 12});
  CHECK_THROWS_AS(head.loss(p, batch, true), GeometryError);

  BackboneConfig reference{.patch_size = 16, .canonical_image = 224};
  CHECK(256 / reference.patch_size * 4 == 64);
  CHECK(192 / reference.patch_size * 4 == 48);
  ParamStore store2(3);
  PoseHead big({.family = TaskFamily::Pose, .num_outputs = 17, .hidden = 4}, store2, "head.pose.b", kDim, 5);
  CHECK(big.forward(features(1, 16, 12, 4)).shape() == Shape{1, 17, 64, 48});
}

TEST_CASE("parsing head") {
  ParamStore store(4);
  ParsingHead head({.family = TaskFamily::Parsing, .num_outputs = 4, .hidden = 8}, store, "head.parsing.a", kDim, 5);
  auto p = features(2, 4, 3, 5);
  CHECK(head.forward(p, 16, 12).shape() == Shape{2, 4, 16, 12});

  // Full size equal to the grid: the upsample is the identity, so each pixel's
  // logits are the 1x1 pipeline applied to its token.
  auto same = head.forward(p, 4, 3);
  auto full = head.forward(p, 4, 3);
  CHECK(bitwise_equal(same.value(), full.value()));
  nn::Linear c1, c2;
  nn::LayerNorm ln;
  c1.weight = &store.get("head.parsing.a.conv1.weight");
  c1.bias = &store.get("head.parsing.a.conv1.bias");
  c2.weight = &store.get("head.parsing.a.conv2.weight");
  c2.bias = &store.get("head.parsing.a.conv2.bias");
  ln.gamma = &store.get("head.parsing.a.norm.weight");
  ln.beta = &store.get("head.parsing.a.norm.bias");
  auto direct = c2(ops::relu(ln(c1(p.tokens))));  // [B, N, C]
  auto as_map = ops::reshape(ops::permute(same, {0, 2, 3, 1}), {2, 12, 4});
  check_close(as_map.value(), direct.value(), 1e-5);

  // Logit gap 10 in favour of the label: CE per pixel < 1e-3.
  for (auto& w : store.get("head.parsing.a.conv2.weight").var.mutable_value().data()) w = 0.0f;
  store.get("head.parsing.a.conv2.bias").var.mutable_value() = Tensor::from({4}, {0, 10, 0, 0});
  Batch batch{.family = TaskFamily::Parsing, .images = Tensor({2, 3, 16, 12})};
  batch.pixel_labels.assign(2 * 16 * 12, 1);
  const double ce = head.loss(p, batch, true).item();
  CHECK(ce < 1e-3);
  CHECK(ce == doctest::Approx(std::log(1.0 + 3.0 * std::exp(-10.0))).epsilon(1e-4));
}

TEST_CASE("attribute head") {
  ParamStore store(5);
  AttributeHead head({.family = TaskFamily::Attribute, .num_outputs = 6}, store, "head.attribute.a", kDim, 5);
  auto p = features(3, 2, 2, 6);
  auto probs = head.probabilities(p);
  for (real v : probs.value().data()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  for (auto& w : store.get("head.attribute.a.fc.weight").var.mutable_value().data()) w = 0.0f;
  auto flat = head.probabilities(p);
  for (real v : flat.value().data()) CHECK(v == 0.5f);
  Batch batch{.family = TaskFamily::Attribute, .images = Tensor({3, 3, 8, 8})};
  batch.attributes = Tensor({3, 6});
  for (std::int64_t i = 0; i < 9; ++i) batch.attributes[i] = 1.0f;
  CHECK(head.loss(p, batch, true).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // Saturated logits agreeing with labels drive the loss to zero.
  store.get("head.attribute.a.fc.bias").var.mutable_value().storage().assign(6, 30.0f);
  batch.attributes.storage().assign(18, 1.0f);
  CHECK(head.loss(p, batch, true).item() < 1e-9);
}

TEST_CASE("detection head output contract") {
  ParamStore store(6);
  HeadConfig cfg{.family = TaskFamily::Detection, .num_outputs = 3, .num_queries = 5, .decoder_layers = 2};
  DetectionHead head(cfg, store, "head.detection.a", kDim, 5);
  auto p = features(2, 3, 3, 7);
  auto out = head.forward(p);
  CHECK(out.class_logits.shape() == Shape{2, 5, 4});
  CHECK(out.boxes.shape() == Shape{2, 5, 4});
  for (std::int64_t q = 0; q < 10; ++q) {
    const auto* b = out.boxes.value().data().data() + q * 4;
    Box box{b[0], b[1], b[2], b[3]};
    CHECK(box.valid());
    for (int k = 0; k < 4; ++k) {
      CHECK(b[k] >= 0.0f);
      CHECK(b[k] <= 1.0f);
    }
  }

  Batch batch{.family = TaskFamily::Detection, .images = Tensor({2, 3, 12, 12})};
  batch.boxes = {{{0.1, 0.1, 0.4, 0.5}}, {{0.2, 0.2, 0.3, 0.3}, {0.5, 0.5, 0.9, 0.8}}};
  batch.box_labels = {{0}, {1, 2}};
  auto loss = head.loss(p, batch, true);
  CHECK(std::isfinite(loss.item()));
  batch.boxes = {{}, {}};
  batch.box_labels = {{}, {}};
  CHECK(std::isfinite(head.loss(p, batch, true).item()));

  batch.boxes = {std::vector<Box>(6, Box{0.1, 0.1, 0.2, 0.2}), {}};
  batch.box_labels = {std::vector<int>(6, 0), {}};
  CHECK_THROWS_AS(head.loss(p, batch, true), ConfigError);

  ParamStore bad(7);
  cfg.num_queries = 0;
  CHECK_THROWS_AS(DetectionHead(cfg, bad, "head.detection.b", kDim, 5), ConfigError);
}

TEST_CASE("counting head") {
  ParamStore store(8);
  CountingHead head({.family = TaskFamily::Counting}, store, "head.counting.a", kDim, 5);
  auto p = features(2, 3, 4, 8);
  auto density = head.forward(p, true);
  CHECK(density.shape() == Shape{2, 1, 12, 16});
  for (real v : density.value().data()) CHECK(v >= 0.0f);
  CHECK(density_counts(Tensor({2, 1, 12, 16})) == std::vector<double>{0.0, 0.0});
  CHECK(head.layer_kinds() == std::vector<std::string>{"upsample_x2", "conv3x3_c64", "batch_norm", "relu",
                                                       "conv3x3_c32", "batch_norm", "relu", "upsample_x2",
                                                       "conv3x3_c16", "batch_norm", "relu", "conv3x3_c1", "relu"});
}

TEST_CASE("counting loss against a coarser target compares block sums") {
  ParamStore store(8);
  CountingHead head({.family = TaskFamily::Counting}, store, "head.counting.a", kDim, 5);
  auto p = features(2, 3, 4, 8);
  Batch batch;
  batch.family = TaskFamily::Counting;
  Rng rng(12);
  batch.density = uniform_tensor({2, 1, 6, 8}, 0.0, 0.1, rng);
  const auto pred = head.forward(p, false).value();
  double sq = 0.0;
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t y = 0; y < 6; ++y)
      for (std::int64_t x = 0; x < 8; ++x) {
        double block = 0.0;
        for (std::int64_t i = 0; i < 2; ++i)
          for (std::int64_t j = 0; j < 2; ++j) block += pred[(n * 12 + 2 * y + i) * 16 + 2 * x + j];
        const double d = block - batch.density[(n * 6 + y) * 8 + x];
        sq += d * d;
      }
  CHECK(head.loss(p, batch, false).value()[0] == doctest::Approx(sq / 96.0).epsilon(1e-5));
  batch.density = Tensor({2, 1, 5, 8});
  CHECK_THROWS_AS(head.loss(p, batch, false), GeometryError);
}

TEST_CASE("dense decoders use layer norm and no batch norm") {
  ParamStore store(9);
  PoseHead pose({.family = TaskFamily::Pose, .num_outputs = 2, .hidden = 4}, store, "head.pose.x", kDim, 5);
  ParsingHead parsing({.family = TaskFamily::Parsing, .num_outputs = 2, .hidden = 4}, store, "head.parsing.x", kDim,
                      5);
  for (const Head* h : std::initializer_list<const Head*>{&pose, &parsing}) {
    const auto kinds = h->layer_kinds();
    CHECK(std::count(kinds.begin(), kinds.end(), "batch_norm") == 0);
    CHECK(std::count(kinds.begin(), kinds.end(), "layer_norm") >= 1);
  }
  for (const auto& name : store.names()) CHECK(store.batch_norm_states().count(name) == 0);
  CHECK(store.batch_norm_states().empty());
}

TEST_CASE("GIoU worked examples and properties") {
  CHECK(giou({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
  CHECK(std::fabs(giou({0, 0, 1, 1}, {2, 2, 3, 3}) + 7.0 / 9.0) < 1e-4);
  CHECK(std::fabs(giou({0, 0, 2, 2}, {1, 1, 3, 3}) - (-0.0794)) < 1e-4);
  CHECK(giou({0.5, 0.5, 0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}) == 0.0);

  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    Box a = random_box(rng), b = random_box(rng);
    CHECK(giou(a, b) == giou(b, a));
    CHECK(giou(a, b) <= iou(a, b) + 1e-15);
    CHECK(giou(a, b) == doctest::Approx(oracle::giou(a, b)).epsilon(1e-12));
    CHECK(giou(a, b) > -1.0);
  }

  Tensor target = Tensor::from({2, 4}, {0, 0, 1, 1, 1, 1, 3, 3});
  auto rows = giou_rows(Var(Tensor::from({2, 4}, {2, 2, 3, 3, 0, 0, 2, 2})), target);
  CHECK(rows.value()[0] == doctest::Approx(-7.0 / 9.0).epsilon(1e-5));
  CHECK(rows.value()[1] == doctest::Approx(1.0 / 7.0 - 2.0 / 9.0).epsilon(1e-5));
}

TEST_CASE("Hungarian assignment") {
  auto one = hungarian({{3.5}});
  CHECK(one.column_of_row == std::vector<int>{0});
  auto two = hungarian({{1, 2}, {2, 1}});
  CHECK(two.column_of_row == std::vector<int>{0, 1});
  CHECK(two.cost == 2.0);
  CHECK_THROWS_AS(hungarian({{1.0}, {2.0}}), ConfigError);

  Rng rng(5);
  for (int rows = 1; rows <= 6; ++rows)
    for (int cols = rows; cols <= 6; ++cols)
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
        for (auto& r : cost)
          for (auto& c : r) c = rng.uniform(0, 10);
        auto a = hungarian(cost);
        std::vector<int> used = a.column_of_row;
        std::sort(used.begin(), used.end());
        CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
        double total = 0.0;
        for (int r = 0; r < rows; ++r) total += cost[r][a.column_of_row[r]];
        CHECK(total == doctest::Approx(a.cost).epsilon(1e-12));
        CHECK(a.cost == doctest::Approx(oracle::assignment_cost(cost)).epsilon(1e-12));
      }
}

TEST_CASE("hungarian_match cost and size constraint") {
  std::vector<std::vector<double>> prob{{0.9, 0.1}, {0.2, 0.8}};
  std::vector<Box> pred{{0.1, 0.1, 0.3, 0.3}, {0.5, 0.5, 0.9, 0.9}};
  std::vector<Box> gt{{0.5, 0.5, 0.9, 0.9}};
  auto a = hungarian_match(prob, pred, gt, {1}, {});
  CHECK(a.column_of_row == std::vector<int>{1});
  auto cost = match_cost(prob, pred, gt, {1}, {});
  CHECK(cost[0][1] == doctest::Approx(2.0 * 0.2).epsilon(1e-12));
  CHECK_THROWS_AS(hungarian_match({{1.0}}, {pred[0]}, {gt[0], gt[0]}, {0, 0}, {}), ConfigError);
}

TEST_CASE("aggregate_loss") {
  auto l1 = leaf({1}, 1, 0.5, 1.5);
  CHECK(aggregate_loss({l1}, {1.0}).item() == l1.item());
  CHECK(aggregate_loss({Var(Tensor::scalar(1.0f)), Var(Tensor::scalar(1.0f))}, {2.0, 3.0}).item() == 5.0f);
  auto a = leaf({1}, 2), b = leaf({1}, 3);
  aggregate_loss({ops::sum(a), ops::sum(b)}, {1.0, 0.0}).backward();
  CHECK(a.grad()[0] == 1.0f);
  CHECK(b.grad()[0] == 0.0f);
  CHECK_THROWS_AS(aggregate_loss({a}, {-1.0}), ConfigError);
}

TEST_CASE("head config validation") {
  CHECK_THROWS_AS(HeadConfig({.num_outputs = 0}).validate(kDim), ConfigError);
  CHECK_THROWS_AS(HeadConfig({.triplet_margin = -0.1}).validate(kDim), ConfigError);
  CHECK_THROWS_AS(HeadConfig({.family = TaskFamily::Detection, .decoder_heads = 3}).validate(kDim), ConfigError);
}

TEST_CASE("make_head builds every family") {
  ParamStore store(10);
  for (auto f : all_task_families()) {
    auto head = make_head({.family = f, .num_outputs = 2, .hidden = 4}, store, "head." + to_string(f) + ".x", kDim, 5);
    CHECK(head->family() == f);
    CHECK_FALSE(head->layer_kinds().empty());
  }
  for (const auto* p : store.parameters()) CHECK(p->scope.kind == ScopeKind::Dataset);
}
