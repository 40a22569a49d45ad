#pragma once

#include <span>
#include <vector>

#include "objseg/encoding.hpp"
#include "objseg/geometry.hpp"

namespace objseg {

struct Detection {
  Box box;             // input-image coordinates, clamped to the image
  double score = 0.0;  // heatmap peak value
  int class_id = 0;
  CenterCell center_cell;
};

struct InstanceResult {
  Detection detection;
  BinaryMask mask;  // full image resolution
};

struct DecodeOptions {
  int max_detections = 100;
  double score_threshold = 0.3;
};

// 3x3 max-pool suppression with same padding: a cell keeps its value iff it
// equals its neighbourhood maximum (ties keep every tied cell), else 0.
Grid nms_maxpool(const Grid& heatmap);

// Top-K surviving peaks with score >= threshold, ordered by descending score
// then (class, row, col). center = (cell + offset) * stride, box = center -/+ wh / 2.
std::vector<Detection> topk_decode(const Grid& heatmap, const Grid& offsets, const Grid& wh, int stride,
                                   int image_height, int image_width, const DecodeOptions& options = {});

struct PasteResult {
  std::vector<InstanceResult> instances;
  std::vector<size_t> dropped;  // detection indices whose clamped box has no pixels
  std::vector<size_t> empty;    // indices into `instances` whose mask came out empty
};

// `grids` holds one grid_size x grid_size probability grid per detection.
// Each grid is bilinearly resampled over the box's integer pixel extent
// [floor(x1), ceil(x2)) x [floor(y1), ceil(y2)) and kept where p > threshold.
PasteResult paste_masks(std::span<const Detection> detections, std::span<const double> grids, int grid_size,
                        int image_height, int image_width, double mask_threshold = 0.5);

}  // namespace objseg
