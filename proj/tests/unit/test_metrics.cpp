#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "oracles.hpp"
#include "path_engine/errors.hpp"
#include "path_engine/metrics.hpp"

using namespace test;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return m;
}

Box random_box(Rng& rng) {
  const double x = rng.uniform(0.0, 0.7), y = rng.uniform(0.0, 0.7);
  return {x, y, x + rng.uniform(0.05, 0.3), y + rng.uniform(0.05, 0.3)};
}

Box jitter(Rng& rng, const Box& b, double s) {
  return {b.x_min + rng.uniform(-s, s), b.y_min + rng.uniform(-s, s), b.x_max + rng.uniform(-s, s),
          b.y_max + rng.uniform(-s, s)};
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(average_precision({true}) == 1.0);
  CHECK(average_precision({false, true}) == 0.5);
  CHECK(average_precision({true, false, true}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
  CHECK(average_precision({false, false}) == 0.0);
}

TEST_CASE("reid mAP and Top1") {
  const Matrix gallery{{1, 0}, {0, 1}};
  {
    auto s = reid_map_top1({{1, 0.1}}, {7}, gallery, {7, 8});
    CHECK(s.map == 1.0);
    CHECK(s.top1 == 1.0);
  }
  {
    auto s = reid_map_top1({{1, 0.1}}, {8}, gallery, {7, 8});
    CHECK(s.map == 0.5);
    CHECK(s.top1 == 0.0);
  }
  {
    auto s = reid_map_top1({{1, 0}, {0, 1}}, {7, 9}, gallery, {7, 8});
    CHECK(s.excluded == 1);
    CHECK(s.evaluated == 1);
    CHECK(s.map == 1.0);
  }
  CHECK(cosine_distance({0, 0}, {1, 0}) == 1.0);
  CHECK(cosine_distance({2, 0}, {1, 0}) == doctest::Approx(0.0));

  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ng = static_cast<std::size_t>(rng.integer(2, 20));
    const auto nq = static_cast<std::size_t>(rng.integer(1, 6));
    auto gallery_m = random_matrix(rng, ng, 4);
    auto query_m = random_matrix(rng, nq, 4);
    std::vector<int> gid(ng), qid(nq);
    for (auto& g : gid) g = static_cast<int>(rng.integer(0, 3));
    for (auto& q : qid) q = static_cast<int>(rng.integer(0, 3));
    const auto s = reid_map_top1(query_m, qid, gallery_m, gid);
    CHECK(std::fabs(s.map - oracle::reid_map(query_m, qid, gallery_m, gid)) <= 1e-9);
    CHECK(std::fabs(s.top1 - oracle::reid_top1(query_m, qid, gallery_m, gid)) <= 1e-9);
    CHECK(s.map >= 0.0);
    CHECK(s.map <= 1.0);
  }
}

TEST_CASE("mIoU and pixel accuracy") {
  auto perfect = miou_pacc({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  CHECK(perfect.miou == 1.0);
  CHECK(perfect.pacc == 1.0);
  auto two = miou_pacc({0, 1, 1}, {0, 0, 1}, 2);
  CHECK(two.miou == doctest::Approx(0.5));
  CHECK(two.pacc == doctest::Approx(2.0 / 3.0));
  CHECK(miou_pacc({0, 0}, {0, 0}, 5).miou == 1.0);
  CHECK_THROWS_AS(miou_pacc({0}, {0, 1}, 2), DimensionError);
  CHECK_THROWS_AS(miou_pacc({3}, {0}, 2), ConfigError);

  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 20));
    const int c = static_cast<int>(rng.integer(1, 5));
    std::vector<int> pred(n), gt(n);
    for (auto& v : pred) v = static_cast<int>(rng.integer(0, c - 1));
    for (auto& v : gt) v = static_cast<int>(rng.integer(0, c - 1));
    const auto s = miou_pacc(pred, gt, c);
    CHECK(std::fabs(s.miou - oracle::miou(pred, gt, c)) <= 1e-9);
    CHECK(std::fabs(s.pacc - oracle::pacc(pred, gt)) <= 1e-9);
  }
}

TEST_CASE("pose PCK and EPE") {
  std::vector<std::vector<Keypoint>> gt{{{2, 3}, {5, 1}}};
  CHECK(pck_epe(gt, gt, 0.5).epe == 0.0);
  CHECK(pck_epe(gt, gt, 0.5).pck == 1.0);
  std::vector<std::vector<Keypoint>> one{{{1, 1}}}, off{{{4, 5}}};
  CHECK(pck_epe(off, one, 1.0).epe == doctest::Approx(5.0));
  CHECK(pck_epe(off, one, 5.0).pck == 1.0);
  CHECK(pck_epe(off, one, 4.9).pck == 0.0);

  Tensor hm({1, 2, 4, 6});
  hm[0 * 24 + 3 * 6 + 2] = 1.0;  // channel 0 peak at (x 2, y 3)
  std::int64_t zeros = -1;
  const auto kp = heatmap_argmax(hm, &zeros);
  CHECK(kp[0][0] == Keypoint{2, 3});
  CHECK(kp[0][1] == Keypoint{0, 0});
  CHECK(zeros == 1);
  CHECK(pose_pck_epe(hm, {{{2, 3}, {0, 0}}}, 0.0).pck == 1.0);

  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const auto b = rng.integer(1, 3), k = rng.integer(1, 4), h = rng.integer(2, 5), w = rng.integer(2, 5);
    auto maps = uniform_tensor({b, k, h, w}, 0.0, 1.0, rng);
    std::vector<std::vector<Keypoint>> truth(static_cast<std::size_t>(b), std::vector<Keypoint>(k));
    for (auto& s : truth)
      for (auto& p : s) p = {rng.uniform(0.0, double(w)), rng.uniform(0.0, double(h))};
    double prev = -1.0;
    for (double thr : {0.5, 1.0, 2.0, 4.0}) {
      const double v = pose_pck_epe(maps, truth, thr).pck;
      CHECK(std::fabs(v - oracle::pck(maps, truth, thr)) <= 1e-9);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("attribute mean accuracy") {
  const Matrix gt{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
  CHECK(attribute_ma(gt, gt).ma == 1.0);
  const Matrix always(4, std::vector<double>{0.9, 0.9});
  CHECK(attribute_ma(always, gt).ma == 0.5);
  const auto one = attribute_ma({{0.1}, {0.2}}, {{0}, {0}});
  CHECK(one.ma == 1.0);
  CHECK(one.one_sided == 1);

  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(rng.integer(1, 20));
    const auto a = static_cast<std::size_t>(rng.integer(1, 6));
    Matrix probs(n, std::vector<double>(a)), truth(n, std::vector<double>(a));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < a; ++j) {
        probs[i][j] = rng.uniform();
        truth[i][j] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      }
    const double v = attribute_ma(probs, truth).ma;
    CHECK(std::fabs(v - oracle::mean_accuracy(probs, truth)) <= 1e-9);
    std::vector<std::size_t> perm(a);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    Matrix pp = probs, tp = truth;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < a; ++j) {
        pp[i][j] = probs[i][perm[j]];
        tp[i][j] = truth[i][perm[j]];
      }
    CHECK(attribute_ma(pp, tp).ma == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("detection AP50") {
  const Box a{0.1, 0.1, 0.4, 0.4}, b{0.5, 0.5, 0.9, 0.9};
  CHECK(*average_precision_50({{{a, 0.9, 0}}}, {{a}}) == 1.0);
  // One true positive then one false positive with two ground truths.
  const auto tp_fp = average_precision_50({{{a, 0.9, 0}, {Box{0.0, 0.6, 0.1, 0.7}, 0.5, 0}}}, {{a, b}});
  CHECK(*tp_fp == doctest::Approx(0.5));
  CHECK(*tp_fp == doctest::Approx(*oracle::ap50({{{a, 0.9, 0}, {Box{0.0, 0.6, 0.1, 0.7}, 0.5, 0}}}, {{a, b}})));
  // A duplicate of a matched box is a false positive.
  CHECK(*average_precision_50({{{a, 0.9, 0}, {a, 0.8, 0}}}, {{a}}) == 1.0);
  CHECK(*average_precision_50({{{a, 0.8, 0}, {b, 0.9, 0}}}, {{a}}) == doctest::Approx(0.5));
  CHECK_FALSE(average_precision_50({{{a, 0.9, 0}}}, {{}}).has_value());
  CHECK_FALSE(detection_ap50({{}}, {{}}, {{}}).has_value());
  CHECK(*detection_ap50({{{a, 0.9, 0}, {b, 0.9, 1}}}, {{a, b}}, {{0, 1}}) == 1.0);
  CHECK(*detection_ap50({{{a, 0.9, 1}, {b, 0.9, 0}}}, {{a, b}}, {{0, 1}}) == 0.0);

  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const auto images = static_cast<std::size_t>(rng.integer(1, 3));
    std::vector<std::vector<Box>> gt(images);
    std::vector<std::vector<Detection>> det(images);
    std::size_t count = 0;
    for (std::size_t i = 0; i < images; ++i) {
      const auto ng = rng.integer(0, 3);
      for (std::int64_t j = 0; j < ng; ++j) gt[i].push_back(random_box(rng));
      const auto nd = rng.integer(0, 5);
      for (std::int64_t j = 0; j < nd && count < 20; ++j, ++count) {
        Box box = !gt[i].empty() && rng.bernoulli(0.7)
                      ? jitter(rng, gt[i][static_cast<std::size_t>(rng.integer(0, ng - 1))], 0.05)
                      : random_box(rng);
        det[i].push_back({box, rng.uniform(), 0});
      }
    }
    const auto got = average_precision_50(det, gt);
    const auto want = oracle::ap50(det, gt);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(std::fabs(*got - *want) <= 1e-9);
      CHECK(*got >= 0.0);
      CHECK(*got <= 1.0);
    }
  }
}

TEST_CASE("counting errors") {
  auto same = counting_errors({1, 2, 3}, {1, 2, 3});
  CHECK(same.mae == 0.0);
  CHECK(same.rmse == 0.0);
  auto e = counting_errors({3, 0}, {0, 4});
  CHECK(e.mae == 3.5);
  CHECK(e.rmse == doctest::Approx(3.5355).epsilon(1e-4));
  Rng rng(26);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(static_cast<std::size_t>(rng.integer(1, 20))), g(p.size());
    for (auto& v : p) v = rng.uniform(0, 50);
    for (auto& v : g) v = rng.uniform(0, 50);
    auto s = counting_errors(p, g);
    CHECK(s.rmse >= s.mae - 1e-12);
  }
  CHECK_THROWS_AS(counting_errors({1}, {}), DimensionError);
}

TEST_CASE("tensor rows") {
  Tensor t({2, 3});
  for (int i = 0; i < 6; ++i) t[i] = static_cast<real>(i);
  const auto m = to_matrix(t);
  CHECK(m[1][2] == 5.0);
  CHECK_THROWS_AS(to_matrix(Tensor({6})), DimensionError);
}
