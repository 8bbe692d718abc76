#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "json.hpp"
#include "path_engine/data.hpp"
#include "path_engine/errors.hpp"

using namespace test;

namespace {

// Pairwise reference for dedup.
std::vector<std::size_t> brute_force_removed(const std::vector<HashCode>& pre, const std::vector<HashCode>& ev) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    bool hit = false;
    for (auto e : ev) hit = hit || e == pre[i];
    if (hit) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_CASE("generators are pure functions of (family, seed, n)") {
  for (auto f : all_task_families()) {
    auto a = generate(f, 5, 6), b = generate(f, 5, 6);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(bitwise_equal(a.samples[i].image, b.samples[i].image));
      CHECK(a.samples[i].id == b.samples[i].id);
      CHECK(a.samples[i].boxes == b.samples[i].boxes);
      CHECK(a.samples[i].pixel_labels == b.samples[i].pixel_labels);
    }
    auto c = generate(f, 6, 6);
    CHECK_FALSE(bitwise_equal(a.samples[0].image, c.samples[0].image));
    auto tail = generate(f, 5, 3, {}, 3);
    CHECK(bitwise_equal(tail.samples[0].image, a.samples[3].image));
  }
  CHECK_THROWS_AS(generate(TaskFamily::ReID, 1, 0), ConfigError);
  CHECK_THROWS_AS(generate(TaskFamily::Parsing, 1, 2, {.num_classes = 9}), ConfigError);
  CHECK_THROWS_AS(parse_task_family("juggling"), ConfigError);
}

TEST_CASE("labels are consistent with the rendering") {
  auto reid = generate(TaskFamily::ReID, 1, 24, {.height = 48, .width = 32});
  CHECK(reid.samples[0].image.shape() == Shape{3, 48, 32});
  CHECK(reid.samples[13].id == 1);

  auto count = generate(TaskFamily::Counting, 2, 40);
  for (const auto& s : count.samples) {
    double total = 0.0;
    for (real v : s.density.data()) {
      CHECK(v >= 0.0f);
      total += v;
    }
    CHECK(std::fabs(total - s.count) < 1e-3);
    CHECK(s.density.shape() == Shape{1, 8, 8});
  }

  auto det = generate(TaskFamily::Detection, 3, 40);
  for (const auto& s : det.samples) {
    CHECK_FALSE(s.boxes.empty());
    CHECK(s.boxes.size() == s.box_labels.size());
    for (const auto& b : s.boxes) {
      CHECK(b.valid());
      CHECK(b.x_min >= 0.0);
      CHECK(b.y_max <= 1.0);
    }
  }

  auto pose = generate(TaskFamily::Pose, 4, 10);
  for (const auto& s : pose.samples) {
    CHECK(s.heatmap.shape() == Shape{4, 8, 8});
    CHECK(s.keypoints.size() == 4);
    for (std::int64_t k = 0; k < 4; ++k) {
      std::int64_t best = 0;
      for (std::int64_t i = 1; i < 64; ++i)
        if (s.heatmap[k * 64 + i] > s.heatmap[k * 64 + best]) best = i;
      CHECK(std::fabs(static_cast<double>(best % 8) - s.keypoints[k].x) <= 0.5);
      CHECK(std::fabs(static_cast<double>(best / 8) - s.keypoints[k].y) <= 0.5);
    }
  }

  auto parsing = generate(TaskFamily::Parsing, 5, 10);
  for (const auto& s : parsing.samples) {
    CHECK(s.pixel_labels.size() == 32 * 32);
    CHECK(*std::max_element(s.pixel_labels.begin(), s.pixel_labels.end()) >= 1);
    CHECK(*std::max_element(s.pixel_labels.begin(), s.pixel_labels.end()) <= 3);
  }

  auto attr = generate(TaskFamily::Attribute, 6, 200);
  std::vector<double> positives(6, 0.0);
  for (const auto& s : attr.samples)
    for (std::size_t a = 0; a < 6; ++a) positives[a] += s.attributes[a];
  for (double p : positives) {
    CHECK(p > 20);
    CHECK(p < 180);
  }
}

TEST_CASE("collate and batch sampling") {
  auto reid = generate(TaskFamily::ReID, 1, 48, {.height = 48, .width = 32});
  BatchSampler sampler(reid, 9);
  auto batch = sampler.next(8);
  CHECK(batch.images.shape() == Shape{8, 3, 48, 32});
  CHECK(batch.ids.size() == 8);
  for (std::size_t i = 0; i < 8; i += 2) CHECK(batch.ids[i] == batch.ids[i + 1]);
  CHECK_THROWS_AS(sampler.next(7), ConfigError);

  auto pose = generate(TaskFamily::Pose, 2, 10);
  auto pb = pose.collate({3, 1});
  CHECK(pb.heatmaps.shape() == Shape{2, 4, 8, 8});
  CHECK(pb.heatmaps[4 * 64] == pose.samples[1].heatmap[0]);
  auto attr = generate(TaskFamily::Attribute, 2, 4).collate({0, 1, 2});
  CHECK(attr.attributes.shape() == Shape{3, 6});

  BatchSampler s1(pose, 3), s2(pose, 3);
  CHECK(s1.next_indices(5) == s2.next_indices(5));
}

TEST_CASE("dhash examples") {
  Tensor uniform({3, 32, 32}, 0.4f);
  CHECK(dhash(uniform) == 0);
  Tensor ramp({3, 32, 40});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 40; ++x) ramp[(c * 32 + y) * 40 + x] = static_cast<real>(x) / 40.0f;
  CHECK(dhash(ramp) == ~HashCode{0});
  auto img = generate(TaskFamily::Parsing, 1, 1).samples[0].image;
  CHECK(hamming(dhash(img), dhash(img)) == 0);

  // Smooth image plus noise well below the column-mean gaps keeps its code.
  Tensor smooth({3, 32, 36});
  Rng rng(3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 36; ++x)
        smooth[(c * 32 + y) * 36 + x] = static_cast<real>(std::sin(0.2 * x + 0.1 * y) + 1e-4 * rng.normal());
  Tensor clean({3, 32, 36});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 36; ++x) clean[(c * 32 + y) * 36 + x] = static_cast<real>(std::sin(0.2 * x + 0.1 * y));
  CHECK(dhash(smooth) == dhash(clean));
}

TEST_CASE("dedup agrees with the pairwise oracle") {
  CHECK(dedup(std::vector<HashCode>{1, 2, 3}, std::vector<HashCode>{4, 5}).removed.empty());
  auto r = dedup(std::vector<HashCode>{1, 2, 3, 2}, std::vector<HashCode>{2});
  CHECK(r.removed == std::vector<std::size_t>{1, 3});
  CHECK(r.kept == std::vector<std::size_t>{0, 2});

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<HashCode> pre, ev;
    for (int i = 0; i < 60; ++i) pre.push_back(static_cast<HashCode>(rng.integer(0, 40)));
    for (int i = 0; i < 10; ++i) ev.push_back(static_cast<HashCode>(rng.integer(0, 40)));
    auto d = dedup(pre, ev);
    CHECK(d.removed == brute_force_removed(pre, ev));
    CHECK(d.kept.size() + d.removed.size() == pre.size());
  }

  auto pretrain = generate(TaskFamily::Detection, 10, 40);
  auto eval = generate(TaskFamily::Detection, 10, 5, {}, 1000, Split::InEval);
  pretrain.samples[7] = eval.samples[2];
  auto res = dedup(pretrain, eval);
  CHECK(res.removed == std::vector<std::size_t>{7});
  CHECK(select(pretrain, res.kept).size() == 39);
}

TEST_CASE("temporal subsampling and identity filtering") {
  CHECK(temporal_subsample(16) == std::vector<std::size_t>{0, 8});
  CHECK(temporal_subsample(7) == std::vector<std::size_t>{0});
  CHECK(temporal_subsample(24).size() == 3);
  CHECK(temporal_subsample(0).empty());
  CHECK(identity_filter({{"a", 14}, {"b", 15}, {"c", 200}, {"d", 201}}) == std::set<std::string>{"b", "c"});
  CHECK(identity_filter({}).empty());
  CHECK(identity_filter({{"x", 100}, {"y", 100}}).size() == 2);
}

TEST_CASE("export layout") {
  const auto dir = std::filesystem::temp_directory_path() / "path_engine_export_test";
  std::filesystem::remove_all(dir);
  auto data = generate(TaskFamily::Counting, 3, 3);
  export_dataset(data, dir);
  auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
  CHECK(manifest["family"] == "counting");
  CHECK(manifest["count"] == 3);
  CHECK(std::filesystem::file_size(dir / "images" / "000001.f32") == 3 * 32 * 32 * 4);
  CHECK(std::filesystem::file_size(dir / "density" / "000002.f32") == 8 * 8 * 4);
  std::ifstream labels(dir / "labels.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(labels, line)) {
    auto rec = nlohmann::json::parse(line);
    CHECK(rec["count"].get<double>() == data.samples[static_cast<std::size_t>(lines)].count);
    ++lines;
  }
  CHECK(lines == 3);

  std::ifstream img(dir / "images" / "000000.f32", std::ios::binary);
  float first = 0;
  img.read(reinterpret_cast<char*>(&first), 4);
  CHECK(first == data.samples[0].image[0]);
  std::filesystem::remove_all(dir);
}
