#include "objseg/encoding.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "objseg/errors.hpp"

namespace objseg {

void draw_gaussian(Grid& heatmap, int channel, CenterCell cell, double radius) {
  if (cell.row < 0 || cell.row >= heatmap.height || cell.col < 0 || cell.col >= heatmap.width)
    throw InvalidInput("draw_gaussian: center outside heatmap");
  radius = std::max(0.0, radius);
  const double sigma = (2.0 * radius + 1.0) / 6.0;
  const double two_sigma2 = 2.0 * sigma * sigma;
  const int reach = static_cast<int>(std::floor(radius));
  for (int dy = -reach; dy <= reach; ++dy) {
    const int r = cell.row + dy;
    if (r < 0 || r >= heatmap.height) continue;
    for (int dx = -reach; dx <= reach; ++dx) {
      const int c = cell.col + dx;
      if (c < 0 || c >= heatmap.width) continue;
      const double g = (dx == 0 && dy == 0) ? 1.0 : std::exp(-(dx * dx + dy * dy) / two_sigma2);
      double& v = heatmap.at(channel, r, c);
      v = std::max(v, g);
    }
  }
}

DetectionTargets encode_detection_targets(const Scene& scene, int stride,
                                          const EncodingOptions& options) {
  const int H = scene.image.height, W = scene.image.width;
  if (stride <= 0 || H % stride != 0 || W % stride != 0)
    throw InvalidInput("encode_detection_targets: image not divisible by stride");
  const int h = H / stride, w = W / stride;

  DetectionTargets t;
  t.stride = stride;
  t.heatmap = Grid(options.num_classes, h, w);
  t.offsets = Grid(2, h, w);
  t.wh = Grid(2, h, w);
  t.center_mask.assign(size_t(h) * w, 0);

  // Area of the instance currently owning each center cell's regression targets.
  std::vector<double> owner_area(size_t(h) * w, -1.0);
  std::vector<int> owner_slot(size_t(h) * w, -1);

  for (size_t i = 0; i < scene.boxes.size(); ++i) {
    const Box& b = scene.boxes[i];
    if (b.area() <= 0) {
      spdlog::warn("scene {}: instance {} has zero area, skipped", scene.id, i);
      continue;
    }
    const double cx = b.center_x(), cy = b.center_y();
    if (cx < 0 || cy < 0 || cx >= W || cy >= H)
      throw InvalidInput("encode_detection_targets: center outside image in " + scene.id);
    const double sx = cx / stride, sy = cy / stride;
    const CenterCell cell{static_cast<int>(std::floor(sy)), static_cast<int>(std::floor(sx))};
    const int cls = i < scene.class_ids.size() ? scene.class_ids[i] : 0;
    if (cls < 0 || cls >= options.num_classes)
      throw InvalidInput("encode_detection_targets: class id out of range");

    const double radius =
        std::floor(gaussian_radius(b.height() / stride, b.width() / stride, options.min_overlap));
    draw_gaussian(t.heatmap, cls, cell, radius);

    const size_t idx = size_t(cell.row) * w + cell.col;
    if (b.area() <= owner_area[idx]) continue;  // larger instance keeps the cell
    owner_area[idx] = b.area();
    t.offsets.at(0, cell.row, cell.col) = sx - cell.col;
    t.offsets.at(1, cell.row, cell.col) = sy - cell.row;
    t.wh.at(0, cell.row, cell.col) = b.width();
    t.wh.at(1, cell.row, cell.col) = b.height();
    if (owner_slot[idx] >= 0) {
      t.center_owner[owner_slot[idx]] = static_cast<int>(i);
    } else {
      owner_slot[idx] = static_cast<int>(t.centers.size());
      t.centers.push_back(cell);
      t.center_owner.push_back(static_cast<int>(i));
    }
    t.center_mask[idx] = 1;
  }
  return t;
}

RoIMaskTarget encode_roi_mask(const BinaryMask& instance_mask, const Box& box, int grid_size) {
  if (grid_size <= 0) throw InvalidInput("encode_roi_mask: grid size must be positive");
  RoIMaskTarget t;
  t.box = box;
  t.grid_size = grid_size;
  t.grid.assign(size_t(grid_size) * grid_size, 0);
  const double bw = box.width() / grid_size, bh = box.height() / grid_size;
  int64_t on = 0;
  for (int i = 0; i < grid_size; ++i) {
    const int r = static_cast<int>(std::floor(box.y1 + (i + 0.5) * bh));
    if (r < 0 || r >= instance_mask.height()) continue;
    for (int j = 0; j < grid_size; ++j) {
      const int c = static_cast<int>(std::floor(box.x1 + (j + 0.5) * bw));
      if (c < 0 || c >= instance_mask.width()) continue;
      if (instance_mask.at(r, c)) {
        t.grid[size_t(i) * grid_size + j] = 1;
        ++on;
      }
    }
  }
  t.empty = on == 0;
  return t;
}

}  // namespace objseg
