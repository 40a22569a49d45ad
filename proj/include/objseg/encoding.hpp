#pragma once

#include <cstdint>
#include <vector>

#include "objseg/geometry.hpp"
#include "objseg/scene.hpp"

namespace objseg {

// Dense CHW double planes.
struct Grid {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), values(size_t(c) * h * w, fill) {}

  double& at(int c, int r, int x) { return values[(size_t(c) * height + r) * width + x]; }
  double at(int c, int r, int x) const { return values[(size_t(c) * height + r) * width + x]; }
  size_t plane_size() const { return size_t(height) * width; }
};

struct CenterCell {
  int row = 0;
  int col = 0;
  friend bool operator==(const CenterCell&, const CenterCell&) = default;
};

struct DetectionTargets {
  Grid heatmap;   // C x h x w, values in [0, 1]
  Grid offsets;   // 2 x h x w: (dx, dy), only meaningful at center cells
  Grid wh;        // 2 x h x w: (w, h) in input pixels, only at center cells
  std::vector<uint8_t> center_mask;  // h x w
  std::vector<CenterCell> centers;   // one per encoded instance, in instance order
  std::vector<int> center_owner;     // instance index owning each entry of `centers`
  int stride = 4;

  bool is_center(int row, int col) const { return center_mask[size_t(row) * heatmap.width + col] != 0; }
};

// Pointwise max of the heatmap with a Gaussian bump centred at `cell`,
// sigma = (2 radius + 1) / 6, drawn within floor(radius) cells.
void draw_gaussian(Grid& heatmap, int channel, CenterCell cell, double radius);

struct EncodingOptions {
  int num_classes = 1;
  double min_overlap = 0.7;
};

// Throws InvalidInput if the image is not divisible by `stride` or a center
// falls outside the image.
DetectionTargets encode_detection_targets(const Scene& scene, int stride,
                                          const EncodingOptions& options = {});

struct RoIMaskTarget {
  Box box;
  int grid_size = 0;
  std::vector<uint8_t> grid;  // P x P row-major
  bool empty = false;         // crop held no foreground
};

// Nearest-neighbour resampling of one instance under `box` onto a P x P grid.
// Cell (i, j) reads the pixel containing x1 + (j + 0.5) w / P, y1 + (i + 0.5) h / P;
// samples outside the image read as 0.
RoIMaskTarget encode_roi_mask(const BinaryMask& instance_mask, const Box& box, int grid_size);

}  // namespace objseg
