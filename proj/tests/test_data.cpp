#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "helpers.hpp"
#include "objseg/data.hpp"
#include "objseg/errors.hpp"

using namespace objseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("objseg_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool box_gap_at_least_one(const Box& a, const Box& b) {
  return a.x2 + 1 <= b.x1 || b.x2 + 1 <= a.x1 || a.y2 + 1 <= b.y1 || b.y2 + 1 <= a.y1;
}

}  // namespace

TEST_CASE("generate_scene is deterministic and valid") {
  SynthConfig cfg;
  cfg.seed = 77;
  for (uint64_t i = 0; i < 10; ++i) {
    const GeneratedScene a = generate_scene(cfg, i), b = generate_scene(cfg, i);
    CHECK(a.scene.image.pixels == b.scene.image.pixels);
    REQUIRE(a.scene.size() == b.scene.size());
    for (size_t k = 0; k < a.scene.size(); ++k) CHECK(a.scene.instances[k] == b.scene.instances[k]);
    CHECK(a.touching_pairs == b.touching_pairs);
    CHECK_NOTHROW(a.scene.validate());
    CHECK(a.scene.size() <= size_t(cfg.max_instances));
    for (float v : a.scene.image.pixels) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
  cfg.seed = 78;
  CHECK(generate_scene(cfg, 0).scene.image.pixels != generate_scene(SynthConfig{}, 0).scene.image.pixels);
}

TEST_CASE("touching_fraction 0 separates instances, 1 makes contact") {
  SynthConfig apart;
  apart.touching_fraction = 0.0;
  for (uint64_t i = 0; i < 30; ++i) {
    const Scene s = generate_scene(apart, i).scene;
    for (size_t a = 0; a < s.size(); ++a)
      for (size_t b = a + 1; b < s.size(); ++b) {
        CHECK(mask_iou(s.instances[a], s.instances[b]) == 0.0);
        CHECK(box_gap_at_least_one(s.boxes[a], s.boxes[b]));
      }
  }
  SynthConfig touch;
  touch.touching_fraction = 1.0;
  touch.min_instances = touch.max_instances = 2;
  for (uint64_t i = 0; i < 30; ++i) {
    const GeneratedScene g = generate_scene(touch, i);
    REQUIRE(g.scene.size() == 2);
    CHECK(masks_touch(g.scene.instances[0], g.scene.instances[1]));
    CHECK(!g.touching_pairs.empty());
  }
}

TEST_CASE("masks_touch") {
  const BinaryMask a = testing::rect_mask(8, 8, 0, 0, 3, 3);
  CHECK(masks_touch(a, testing::rect_mask(8, 8, 3, 0, 5, 2)));
  CHECK_FALSE(masks_touch(a, testing::rect_mask(8, 8, 4, 0, 5, 2)));
  CHECK_FALSE(masks_touch(a, testing::rect_mask(8, 8, 3, 3, 5, 5)));  // diagonal only
}

TEST_CASE("folder dataset round trip and structured errors") {
  const fs::path root = temp_dir("folder");
  SynthConfig cfg;
  std::vector<Scene> scenes{generate_scene(cfg, 0).scene, generate_scene(cfg, 1).scene};
  write_folder_dataset(root, scenes);
  FolderDataset ds(root);
  REQUIRE(ds.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    const Scene s = ds.load(i);
    const Scene& ref = scenes[i].id == s.id ? scenes[i] : scenes[1 - i];
    CHECK(s.size() == ref.size());
    for (size_t k = 0; k < s.size(); ++k) CHECK(s.instances[k] == ref.instances[k]);
  }

  // Black mask is dropped.
  const fs::path masks = root / ds.id(0) / "masks";
  cv::imwrite((masks / "zz_black.png").string(), cv::Mat::zeros(cfg.image_size, cfg.image_size, CV_8UC1));
  const size_t before = scenes[0].id == ds.id(0) ? scenes[0].size() : scenes[1].size();
  CHECK(ds.load(0).size() == before);

  // Shape mismatch.
  cv::imwrite((masks / "zz_small.png").string(), cv::Mat::ones(10, 10, CV_8UC1) * 255);
  try {
    ds.load(0);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(e.kind() == DatasetError::Kind::kShapeMismatch);
    CHECK(e.scene_id() == ds.id(0));
  }
  fs::remove(masks / "zz_small.png");

  // Missing masks directory.
  fs::create_directories(root / "lonely" / "images");
  cv::imwrite((root / "lonely" / "images" / "lonely.png").string(), cv::Mat::zeros(8, 8, CV_8UC3));
  FolderDataset ds2(root);
  bool saw = false;
  for (size_t i = 0; i < ds2.size(); ++i)
    if (ds2.id(i) == "lonely") {
      try {
        ds2.load(i);
      } catch (const DatasetError& e) {
        saw = e.kind() == DatasetError::Kind::kMissingMasks && e.scene_id() == "lonely";
      }
    }
  CHECK(saw);

  // Unreadable image.
  fs::create_directories(root / "broken" / "images");
  fs::create_directories(root / "broken" / "masks");
  std::ofstream(root / "broken" / "images" / "broken.png") << "not a png";
  FolderDataset ds3(root);
  for (size_t i = 0; i < ds3.size(); ++i)
    if (ds3.id(i) == "broken") {
      try {
        ds3.load(i);
        FAIL("expected DatasetError");
      } catch (const DatasetError& e) {
        CHECK(e.kind() == DatasetError::Kind::kUnreadable);
      }
    }
  CHECK_THROWS_AS(FolderDataset(root / "nope"), IoError);
  CHECK_THROWS_AS(FolderDataset(temp_dir("empty")), DatasetError);
}

TEST_CASE("augmentation: identity, flip involution, recomputed boxes") {
  const Scene s = generate_scene(SynthConfig{}, 3).scene;
  const int H = s.image.height, W = s.image.width;
  AugmentParams id{0, 0, W, H, false, false};
  const Scene same = apply_augmentation(s, id, H, W);
  CHECK(same.image.pixels == s.image.pixels);
  REQUIRE(same.size() == s.size());
  for (size_t k = 0; k < s.size(); ++k) CHECK(same.instances[k] == s.instances[k]);

  for (bool hflip : {true, false}) {
    AugmentParams f{0, 0, W, H, hflip, !hflip};
    const Scene twice = apply_augmentation(apply_augmentation(s, f, H, W), f, H, W);
    CHECK(twice.image.pixels == s.image.pixels);
    for (size_t k = 0; k < s.size(); ++k) CHECK(twice.instances[k] == s.instances[k]);
  }

  std::mt19937_64 rng(4);
  AugmentConfig cfg;
  cfg.out_height = cfg.out_width = 96;
  for (int t = 0; t < 30; ++t) {
    const Scene a = augment(generate_scene(SynthConfig{}, uint64_t(t)).scene, rng, cfg);
    CHECK(a.image.height == 96);
    for (size_t k = 0; k < a.size(); ++k) {
      CHECK(tight_box(a.instances[k]) == a.boxes[k]);
      CHECK(a.instances[k].count() >= cfg.min_instance_area);
    }
  }
}

TEST_CASE("letterbox keeps aspect ratio and pads bottom/right") {
  Image img(3, 20, 40);
  std::fill(img.pixels.begin(), img.pixels.end(), 1.0f);
  const Scene s = Scene::make("wide", img, {testing::rect_mask(20, 40, 0, 0, 40, 20)});
  const Scene l = letterbox(s, 32, 32);
  REQUIRE(l.size() == 1);
  CHECK(l.boxes[0] == Box{0, 0, 32, 16});
  CHECK(l.image.at(0, 31, 31) == 0.0f);
}
