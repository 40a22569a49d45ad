#include "objseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "objseg/errors.hpp"

namespace objseg {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x2 >= x1 && y2 >= y1;
}

Box Box::clamped(double w, double h) const {
  Box b{std::clamp(x1, 0.0, w), std::clamp(y1, 0.0, h), std::clamp(x2, 0.0, w),
        std::clamp(y2, 0.0, h)};
  return b;
}

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InvalidInput("negative mask shape");
  data_.assign(static_cast<size_t>(height) * static_cast<size_t>(width), 0);
}

int64_t BinaryMask::count() const {
  return std::count_if(data_.begin(), data_.end(), [](uint8_t v) { return v != 0; });
}

BinaryMask BinaryMask::from_box(int height, int width, const Box& box) {
  BinaryMask m(height, width);
  const int c0 = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int r0 = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int c1 = std::min(width, static_cast<int>(std::ceil(box.x2)));
  const int r1 = std::min(height, static_cast<int>(std::ceil(box.y2)));
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.set(r, c);
  return m;
}

double box_iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw InvalidInput("mask_iou: shape mismatch");
  int64_t inter = 0, uni = 0;
  const auto da = a.data();
  const auto db = b.data();
  for (size_t i = 0; i < da.size(); ++i) {
    const bool x = da[i] != 0, y = db[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Box tight_box(const BinaryMask& mask) {
  int rmin = std::numeric_limits<int>::max(), cmin = rmin;
  int rmax = -1, cmax = -1;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (!mask.at(r, c)) continue;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (rmax < 0) throw InvalidInput("tight_box: empty mask");
  return Box{static_cast<double>(cmin), static_cast<double>(rmin), static_cast<double>(cmax + 1),
             static_cast<double>(rmax + 1)};
}

namespace {

// Smallest nonnegative root of a r^2 + b r + c = 0, assuming one exists.
double smallest_nonnegative_root(double a, double b, double c) {
  const double disc = std::max(0.0, b * b - 4 * a * c);
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = -0.5 * (b + std::copysign(sq, b));
  double r1 = q / a;
  double r2 = q != 0 ? c / q : r1;
  if (r1 > r2) std::swap(r1, r2);
  if (r1 >= 0) return r1;
  return std::max(0.0, r2);
}

}  // namespace

double gaussian_radius(double height, double width, double min_overlap) {
  const double h = height, w = width, o = min_overlap;
  if (o >= 1.0) return 0.0;
  // Shifted: (w-r)(h-r) / (2wh - (w-r)(h-r)) = o
  //   -> r^2 - (h+w) r + wh(1-o)/(1+o) = 0
  const double r_shift = smallest_nonnegative_root(1.0, -(h + w), w * h * (1 - o) / (1 + o));
  // Shrunk: (w-2r)(h-2r) / wh = o
  //   -> 4r^2 - 2(h+w) r + (1-o) wh = 0
  const double r_shrink = smallest_nonnegative_root(4.0, -2.0 * (h + w), (1 - o) * w * h);
  // Grown: wh / ((w+2r)(h+2r)) = o
  //   -> 4o r^2 + 2o(h+w) r + (o-1) wh = 0
  const double r_grow = smallest_nonnegative_root(4.0 * o, 2.0 * o * (h + w), (o - 1) * w * h);
  return std::max(0.0, std::min({r_shift, r_shrink, r_grow}));
}

}  // namespace objseg
