#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "objseg/errors.hpp"
#include "objseg/metrics.hpp"
#include "oracles.hpp"

using namespace objseg;

namespace {

InstanceResult pred(const Box& b, double score, int H, int W) {
  InstanceResult r;
  r.detection.box = b;
  r.detection.score = score;
  r.mask = BinaryMask::from_box(H, W, b);
  return r;
}

Scene gt_scene(const std::vector<Box>& boxes, int H = 32, int W = 32) {
  std::vector<BinaryMask> masks;
  for (const auto& b : boxes) masks.push_back(BinaryMask::from_box(H, W, b));
  return Scene::make("gt", testing::flat_image(H, W), masks);
}

}  // namespace

TEST_CASE("match_instances greedy semantics") {
  const Scene gt = gt_scene({{0, 0, 10, 10}});
  std::vector<InstanceResult> one{pred({0, 0, 10, 9}, 0.9, 32, 32)};
  MatchResult m = match_instances(one, gt, 0.5, IoUKind::kBox);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].iou == doctest::Approx(0.9));

  std::vector<InstanceResult> low{pred({0, 0, 10, 4}, 0.9, 32, 32)};
  m = match_instances(low, gt, 0.5, IoUKind::kBox);
  CHECK(m.pairs.empty());
  CHECK(m.unmatched_predictions.size() == 1);
  CHECK(m.unmatched_ground_truths.size() == 1);

  std::vector<InstanceResult> two{pred({0, 0, 10, 10}, 0.4, 32, 32), pred({0, 0, 10, 8}, 0.8, 32, 32)};
  m = match_instances(two, gt, 0.5, IoUKind::kMask);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].prediction == 1);
  CHECK(m.unmatched_predictions == std::vector<int>{0});
}

TEST_CASE("average_precision examples") {
  CHECK(average_precision({{0.9, true}, {0.5, true}}, 2).value == 1.0);
  CHECK(average_precision({{0.9, false}, {0.8, true}}, 1).value == doctest::Approx(0.5));
  CHECK(average_precision({}, 3).value == 0.0);
  const ApValue undefined = average_precision({{0.9, false}}, 0);
  CHECK(undefined.undefined);
  CHECK(std::isnan(undefined.value));
}

TEST_CASE("AP monotonicity under false positives and thresholds") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 1);
  for (int t = 0; t < 50; ++t) {
    std::vector<ScoredOutcome> s;
    for (int i = 0; i < 12; ++i) s.push_back({u(rng), u(rng) < 0.6});
    const double base = average_precision(s, 10).value;
    auto with_fp = s;
    with_fp.push_back({0.05, false});
    CHECK(average_precision(with_fp, 10).value <= base + 1e-15);
    for (size_t i = 0; i < s.size(); ++i)
      if (!s[i].true_positive) {
        auto fewer = s;
        fewer.erase(fewer.begin() + long(i));
        CHECK(average_precision(fewer, 10).value >= base - 1e-15);
        break;
      }
  }
  // AP_alpha does not increase with alpha.
  const Scene gt = gt_scene({{0, 0, 10, 10}, {15, 15, 30, 28}});
  std::vector<InstanceResult> p{pred({1, 0, 10, 10}, 0.9, 32, 32), pred({15, 17, 29, 28}, 0.7, 32, 32),
                                pred({2, 2, 9, 9}, 0.5, 32, 32)};
  double prev = 2;
  for (double a : iou_thresholds()) {
    const MatchResult m = match_instances(p, gt, a, IoUKind::kMask);
    std::vector<ScoredOutcome> o;
    for (size_t i = 0; i < p.size(); ++i) o.push_back({p[i].detection.score, bool(m.prediction_matched[i])});
    const double ap = average_precision(o, gt.size()).value;
    CHECK(ap <= prev);
    prev = ap;
  }
}

TEST_CASE("evaluate equals the brute-force oracle on random scenes") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> coord(0, 28), len(2, 12), count(0, 10);
  const int H = 40, W = 40;
  for (int trial = 0; trial < 50 / 5; ++trial) {
    std::vector<Scene> scenes;
    std::vector<std::vector<InstanceResult>> preds;
    for (int s = 0; s < 5; ++s) {
      std::vector<Box> boxes;
      const int ng = count(rng);
      for (int k = 0; k < ng; ++k) {
        const int x = coord(rng), y = coord(rng);
        boxes.push_back({double(x), double(y), double(x + len(rng)), double(y + len(rng))});
      }
      scenes.push_back(gt_scene(boxes, H, W));
      std::vector<InstanceResult> ps;
      for (const auto& b : boxes)
        if (u(rng) < 0.8) {
          const int dx = int(u(rng) * 3) - 1, dy = int(u(rng) * 3) - 1;
          ps.push_back(pred(Box{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2}.clamped(W, H), u(rng), H, W));
        }
      for (int k = int(u(rng) * 3); k > 0; --k) {
        const int x = coord(rng), y = coord(rng);
        ps.push_back(pred({double(x), double(y), double(x + len(rng)), double(y + len(rng))}, u(rng), H, W));
      }
      preds.push_back(std::move(ps));
    }
    size_t total_gt = 0;
    for (const auto& s : scenes) total_gt += s.size();
    if (total_gt == 0) continue;

    const Evaluation ev = evaluate(preds, scenes);
    auto oracle_ap = [&](double alpha, bool mask) {
      std::vector<std::pair<double, bool>> scored;
      for (size_t i = 0; i < scenes.size(); ++i) {
        std::vector<std::vector<double>> iou(preds[i].size(), std::vector<double>(scenes[i].size()));
        std::vector<double> scores;
        for (size_t p = 0; p < preds[i].size(); ++p) {
          scores.push_back(preds[i][p].detection.score);
          for (size_t g = 0; g < scenes[i].size(); ++g)
            iou[p][g] = mask ? oracle::mask_iou(preds[i][p].mask, scenes[i].instances[g])
                             : oracle::box_iou(preds[i][p].detection.box, scenes[i].boxes[g]);
        }
        const auto match = oracle::greedy_match(iou, scores, scenes[i].size(), alpha);
        for (size_t p = 0; p < scores.size(); ++p) scored.push_back({scores[p], match[p] >= 0});
      }
      return oracle::average_precision(scored, total_gt);
    };
    double box = 0, mask = 0;
    for (int k = 0; k < 10; ++k) {
      box += oracle_ap((50 + 5 * k) / 100.0, false);
      mask += oracle_ap((50 + 5 * k) / 100.0, true);
    }
    CHECK(std::abs(ev.report.ap_box - box / 10) <= 1e-12);
    CHECK(std::abs(ev.report.ap_mask - mask / 10) <= 1e-12);
    CHECK(std::abs(ev.report.ap_mask_50 - oracle_ap(0.5, true)) <= 1e-12);
    CHECK(std::abs(ev.report.ap_mask_75 - oracle_ap(0.75, true)) <= 1e-12);
    if (!ev.flags.aiou_50_empty) CHECK(ev.report.aiou_50 >= 0.5);
    if (!ev.flags.aiou_75_empty) CHECK(ev.report.aiou_75 >= 0.75);
  }
}

TEST_CASE("AIoU arithmetic, empty flag and oracle self-match") {
  MatchResult m;
  m.pairs = {{0, 0, 0.6}, {1, 1, 0.8}};
  CHECK(average_matched_iou(std::span(&m, 1)).value == doctest::Approx(0.7));
  MatchResult none;
  const AiouValue e = average_matched_iou(std::span(&none, 1));
  CHECK(e.empty);
  CHECK(e.value == 0.0);

  const Scene gt = gt_scene({{0, 0, 10, 10}, {12, 12, 20, 30}});
  std::vector<std::vector<InstanceResult>> self{{pred({0, 0, 10, 10}, 1, 32, 32), pred({12, 12, 20, 30}, 1, 32, 32)}};
  const Evaluation ev = evaluate(self, {gt});
  CHECK(ev.report.ap_box == 1.0);
  CHECK(ev.report.ap_mask == 1.0);
  CHECK(ev.report.aiou_75 == 1.0);

  const Evaluation empty = evaluate({{}}, {gt});
  CHECK(empty.report.ap_mask == 0.0);
  CHECK(empty.flags.aiou_50_empty);

  CHECK_THROWS_AS(evaluate({}, {}), InvalidInput);
  CHECK(fps_from_timings({0.5, 0.1, 0.2}) == doctest::Approx(5.0));
}
