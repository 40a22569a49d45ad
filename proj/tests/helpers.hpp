#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "objseg/geometry.hpp"
#include "objseg/scene.hpp"

namespace testing {

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f with respect to x[i].
inline double numeric_grad(std::vector<double>& x, size_t i, const std::function<double()>& f, double h = 1e-6) {
  const double keep = x[i];
  x[i] = keep + h;
  const double up = f();
  x[i] = keep - h;
  const double down = f();
  x[i] = keep;
  return (up - down) / (2 * h);
}

// Richardson-extrapolated central difference, O(h^4) truncation. The larger
// step keeps cancellation small when f sums many terms.
inline double numeric_grad_richardson(std::vector<double>& x, size_t i, const std::function<double()>& f,
                                      double h = 1e-3) {
  const double coarse = numeric_grad(x, i, f, h);
  const double fine = numeric_grad(x, i, f, h / 2);
  return (4 * fine - coarse) / 3;
}

inline objseg::BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p) {
  std::bernoulli_distribution on(p);
  objseg::BinaryMask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, on(rng));
  return m;
}

inline objseg::BinaryMask rect_mask(int h, int w, int x1, int y1, int x2, int y2) {
  return objseg::BinaryMask::from_box(h, w, objseg::Box{double(x1), double(y1), double(x2), double(y2)});
}

inline objseg::Image flat_image(int h, int w, float v = 0.5f) {
  objseg::Image img(3, h, w);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

}  // namespace testing
