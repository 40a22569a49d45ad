#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "objseg/data.hpp"
#include "objseg/encoding.hpp"
#include "objseg/errors.hpp"

using namespace objseg;

namespace {

Scene scene_with_boxes(int size, const std::vector<Box>& boxes) {
  std::vector<BinaryMask> masks;
  for (const auto& b : boxes) masks.push_back(BinaryMask::from_box(size, size, b));
  return Scene::make("boxes", testing::flat_image(size, size), masks);
}

}  // namespace

TEST_CASE("draw_gaussian peak, zero radius and max composition") {
  Grid g(1, 9, 9);
  draw_gaussian(g, 0, {4, 4}, 2.0);
  CHECK(g.at(0, 4, 4) == 1.0);
  const double sigma = 5.0 / 6.0;
  CHECK(g.at(0, 4, 5) == doctest::Approx(std::exp(-1 / (2 * sigma * sigma))));
  CHECK(g.at(0, 4, 7) == 0.0);  // beyond floor(radius)

  Grid z(1, 5, 5);
  draw_gaussian(z, 0, {2, 2}, 0.0);
  CHECK(z.at(0, 2, 2) == 1.0);
  double others = 0;
  for (double v : z.values) others += v;
  CHECK(others == 1.0);

  // Two-pass oracle: two separately drawn fields, then the pointwise max.
  Grid a(1, 12, 12), b(1, 12, 12), both(1, 12, 12);
  draw_gaussian(a, 0, {5, 4}, 3.2);
  draw_gaussian(b, 0, {6, 7}, 2.6);
  draw_gaussian(both, 0, {5, 4}, 3.2);
  draw_gaussian(both, 0, {6, 7}, 2.6);
  for (size_t i = 0; i < both.values.size(); ++i) CHECK(both.values[i] == std::max(a.values[i], b.values[i]));
}

TEST_CASE("encode_detection_targets offsets, cells and wh") {
  // Box centred at (13, 7): x 11..15, y 5..9.
  const Scene s = scene_with_boxes(32, {{11, 5, 15, 9}, {6, 6, 10, 10}});
  const DetectionTargets t = encode_detection_targets(s, 4);
  REQUIRE(t.centers.size() == 2);
  CHECK(t.centers[0] == CenterCell{1, 3});
  CHECK(t.offsets.at(0, 1, 3) == doctest::Approx(0.25));
  CHECK(t.offsets.at(1, 1, 3) == doctest::Approx(0.75));
  CHECK(t.wh.at(0, 1, 3) == 4.0);
  CHECK(t.wh.at(1, 1, 3) == 4.0);
  CHECK(t.centers[1] == CenterCell{2, 2});
  CHECK(t.offsets.at(0, 2, 2) == 0.0);
  CHECK(t.offsets.at(1, 2, 2) == 0.0);
  CHECK(t.heatmap.at(0, 1, 3) == 1.0);
  CHECK(t.is_center(2, 2));
}

TEST_CASE("encode_detection_targets errors and collisions") {
  const Scene s = scene_with_boxes(30, {{2, 2, 6, 6}});
  CHECK_THROWS_AS(encode_detection_targets(s, 4), InvalidInput);

  // Two instances sharing the center cell: the larger keeps the regression targets.
  const Scene c = scene_with_boxes(32, {{8, 8, 10, 10}, {4, 4, 14, 14}});
  const DetectionTargets t = encode_detection_targets(c, 4);
  int centers = 0;
  for (auto v : t.center_mask) centers += v;
  CHECK(centers == 1);
  CHECK(t.wh.at(0, 2, 2) == 10.0);
}

TEST_CASE("encoded heatmaps: exact peak count on separated instances, bounded, monotone in instances") {
  SynthConfig cfg;
  cfg.touching_fraction = 0.0;
  for (uint64_t i = 0; i < 20; ++i) {
    const Scene s = generate_scene(cfg, i).scene;
    const DetectionTargets t = encode_detection_targets(s, 4);
    int ones = 0;
    for (double v : t.heatmap.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      ones += v == 1.0;
    }
    CHECK(ones == int(t.centers.size()));
    for (const auto& cc : t.centers) {
      CHECK(t.offsets.at(0, cc.row, cc.col) >= 0.0);
      CHECK(t.offsets.at(0, cc.row, cc.col) < 1.0);
      CHECK(t.offsets.at(1, cc.row, cc.col) >= 0.0);
      CHECK(t.offsets.at(1, cc.row, cc.col) < 1.0);
    }
    if (s.size() > 1) {
      std::vector<BinaryMask> fewer(s.instances.begin(), s.instances.end() - 1);
      const DetectionTargets t2 = encode_detection_targets(Scene::make("f", s.image, fewer), 4);
      for (size_t k = 0; k < t.heatmap.values.size(); ++k) CHECK(t.heatmap.values[k] >= t2.heatmap.values[k]);
    }
  }
}

TEST_CASE("encode_roi_mask examples") {
  const BinaryMask m = testing::rect_mask(32, 32, 4, 4, 20, 12);
  const RoIMaskTarget full = encode_roi_mask(m, {4, 4, 20, 12}, 16);
  for (auto v : full.grid) CHECK(v == 1);
  CHECK_FALSE(full.empty);

  const RoIMaskTarget bg = encode_roi_mask(m, {22, 20, 30, 30}, 16);
  for (auto v : bg.grid) CHECK(v == 0);
  CHECK(bg.empty);

  // Box covering the instance plus the same width of background on the right.
  for (int P : {16, 32, 64}) {
    const RoIMaskTarget half = encode_roi_mask(m, {4, 4, 28.0, 12}, P);
    double frac = 0;
    for (auto v : half.grid) frac += v;
    frac /= double(P) * P;
    CHECK(std::abs(frac - 16.0 / 24.0) <= 2.0 / P);
  }
}
