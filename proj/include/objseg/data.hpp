#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "objseg/scene.hpp"

namespace objseg {

// Deterministic clustered-blob scenes: perturbed ellipses with thin
// protrusions, some of them placed in contact with a neighbour.
struct SynthConfig {
  int image_size = 128;
  int min_instances = 2;
  int max_instances = 8;
  double min_axis = 6.0;  // ellipse semi-axis range, pixels
  double max_axis = 13.0;
  int min_protrusions = 0;
  int max_protrusions = 2;
  double min_protrusion_length = 3.0;
  double max_protrusion_length = 8.0;
  double touching_fraction = 0.5;
  uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct GeneratedScene {
  Scene scene;
  std::vector<std::pair<int, int>> touching_pairs;  // instance indices in contact
  int requested_instances = 0;
  bool packing_shortfall = false;  // fewer instances placed than requested
};

GeneratedScene generate_scene(const SynthConfig& cfg, uint64_t index);

// Random stream for (seed, index); streams for different indices are independent.
std::mt19937_64 split_stream(uint64_t seed, uint64_t index);

// True if the masks share a pixel or a 4-neighbour pixel pair.
bool masks_touch(const BinaryMask& a, const BinaryMask& b);

// DSB2018-style layout: root/<id>/images/<id>.png and root/<id>/masks/<k>.png
// with one 8-bit mask per instance. Scenes are read on demand.
class FolderDataset {
 public:
  // Throws IoError if `root` is not a directory, DatasetError(kEmpty) if it holds no scenes.
  explicit FolderDataset(std::filesystem::path root);

  size_t size() const { return ids_.size(); }
  const std::string& id(size_t i) const { return ids_.at(i); }
  const std::filesystem::path& root() const { return root_; }

  // Throws DatasetError naming the scene id.
  Scene load(size_t i) const;

 private:
  std::filesystem::path root_;
  std::vector<std::string> ids_;
};

// Reads an 8-bit grayscale or colour image as a 3-channel [0,1] image.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

void write_folder_dataset(const std::filesystem::path& root, const std::vector<Scene>& scenes);

struct AugmentConfig {
  int out_height = 0;  // 0 keeps the input size
  int out_width = 0;
  double min_crop_scale = 0.6;
  double max_crop_scale = 1.0;
  bool horizontal_flip = true;
  bool vertical_flip = true;
  int min_instance_area = 9;
};

struct AugmentParams {
  int crop_x = 0, crop_y = 0, crop_width = 0, crop_height = 0;
  bool horizontal_flip = false;
  bool vertical_flip = false;
};

// Crop, letterbox to (out_height, out_width), then flip. Instances left with
// fewer than `min_instance_area` pixels are removed; boxes are recomputed.
Scene apply_augmentation(const Scene& scene, const AugmentParams& params, int out_height,
                         int out_width, int min_instance_area = 9);

AugmentParams sample_augmentation(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng);
Scene augment(const Scene& scene, std::mt19937_64& rng, const AugmentConfig& cfg = {});

// Uniform scale to fit inside (height, width), zero padding on the bottom/right.
Scene letterbox(const Scene& scene, int height, int width, int min_instance_area = 1);

}  // namespace objseg
