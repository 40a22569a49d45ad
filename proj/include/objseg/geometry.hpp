#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace objseg {

// Axis-aligned box in continuous input-image coordinates, half-open:
// a pixel (r, c) lies inside iff x1 <= c < x2 and y1 <= r < y2 for
// integer-aligned boxes.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const;

  Box clamped(double width, double height) const;

  friend bool operator==(const Box&, const Box&) = default;
};

// Row-major {0,1} mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty_shape() const { return height_ == 0 || width_ == 0; }

  uint8_t at(int row, int col) const { return data_[index(row, col)]; }
  void set(int row, int col, bool on = true) { data_[index(row, col)] = on ? 1 : 0; }

  std::span<const uint8_t> data() const { return data_; }
  std::span<uint8_t> data() { return data_; }

  int64_t count() const;
  bool any() const { return count() > 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

  // Mask with every pixel of the integer-aligned region [x1,x2) x [y1,y2) set.
  static BinaryMask from_box(int height, int width, const Box& box);

 private:
  size_t index(int row, int col) const {
    return static_cast<size_t>(row) * static_cast<size_t>(width_) + static_cast<size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<uint8_t> data_;
};

double box_iou(const Box& a, const Box& b);

// Throws InvalidInput on shape mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

// Minimal box covering the foreground; x2 = max_col + 1. Throws on empty.
Box tight_box(const BinaryMask& mask);

// Largest radius r such that perturbing a box of size (h, w) by r under each
// of the three corner configurations (both corners shifted together, box
// shrunk, box grown) keeps IoU >= min_overlap. Minimum over the three
// quadratic roots.
double gaussian_radius(double height, double width, double min_overlap = 0.7);

}  // namespace objseg
