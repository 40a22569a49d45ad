#pragma once

#include <string>
#include <vector>

#include "objseg/geometry.hpp"

namespace objseg {

// Planar CHW float image with intensities in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w), pixels(size_t(c) * h * w, 0.f) {}

  float& at(int c, int r, int x) { return pixels[(size_t(c) * height + r) * width + x]; }
  float at(int c, int r, int x) const { return pixels[(size_t(c) * height + r) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Ground truth for one image. Invariant: every mask has the image's shape and
// is nonempty, and boxes[i] == tight_box(instances[i]).
struct Scene {
  std::string id;
  Image image;
  std::vector<BinaryMask> instances;
  std::vector<Box> boxes;
  std::vector<int> class_ids;

  // Builds a scene, dropping empty masks. Throws InvalidInput on shape mismatch.
  static Scene make(std::string id, Image image, std::vector<BinaryMask> masks,
                    std::vector<int> class_ids = {});

  size_t size() const { return instances.size(); }

  // Throws InvalidInput if any invariant is broken.
  void validate() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

}  // namespace objseg
