#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "objseg/losses.hpp"
#include "oracles.hpp"

using namespace objseg;

TEST_CASE("focal loss closed forms") {
  std::vector<double> p{0.5}, y{1.0};
  CHECK(focal_loss(p, y) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  std::vector<double> p2{0.5, 0.5}, y2{1.0, 0.9};
  CHECK(focal_loss(p2, y2) - focal_loss(p, y) == doctest::Approx(1e-4 * 0.25 * std::log(2.0)).epsilon(1e-9));
  std::vector<double> perfect{1.0, 0.0, 0.0}, target{1.0, 0.3, 0.0};
  CHECK(focal_loss(perfect, target) < 1e-5);
}

TEST_CASE("focal loss decreases as the positive prediction approaches 1") {
  std::vector<double> y{1.0, 0.4, 0.0};
  double prev = 1e9;
  for (double q = 0.05; q < 1.0; q += 0.05) {
    std::vector<double> p{q, 0.2, 0.1};
    const double l = focal_loss(p, y);
    CHECK(l >= 0.0);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("keypoint L1 examples and masking") {
  std::vector<uint8_t> centers{0, 1, 0};
  std::vector<double> pred{9, 0.5, 9, 9, 0.5, 9}, tgt{0, 0.25, 0, 0, 0.75, 0};
  CHECK(keypoint_l1_loss(pred, tgt, centers) == doctest::Approx(0.25));
  pred[0] = -100;
  CHECK(keypoint_l1_loss(pred, tgt, centers) == doctest::Approx(0.25));
  std::vector<uint8_t> none{0, 0, 0};
  CHECK(keypoint_l1_loss(pred, tgt, none) == 0.0);
}

TEST_CASE("mask BCE closed forms") {
  std::vector<uint8_t> t{1, 0, 1, 0};
  std::vector<double> exact{1, 0, 1, 0}, half(4, 0.5), quarter(4, 0.25);
  CHECK(mask_bce_loss(exact, t).value == doctest::Approx(-std::log(1 - kProbEpsilon)));
  CHECK(mask_bce_loss(half, t).value == doctest::Approx(std::log(2.0)));
  std::vector<uint8_t> zeros(4, 0);
  CHECK(mask_bce_loss(quarter, zeros).value == doctest::Approx(-std::log(0.75)));
  CHECK(mask_bce_loss(std::span<const double>{}, std::span<const uint8_t>{}).empty);
}

TEST_CASE("total loss weights and linearity") {
  CHECK(total_loss(0, 0, 0, 0).total == 0.0);
  CHECK(total_loss(1, 0, 0, 0).total == 1.0);
  CHECK(total_loss(0, 0, 10, 0).total == doctest::Approx(1.0));
  const auto a = total_loss(0.3, 0.2, 4, 0.7), b = total_loss(0.6, 0.4, 8, 1.4);
  CHECK(b.total == doctest::Approx(2 * a.total));
}

TEST_CASE("losses match per-pixel references on random inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> p(400), y(400), off(800), tgt(800);
    std::vector<uint8_t> c(400), m(400);
    for (size_t i = 0; i < 400; ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < 0.02 ? 1.0 : u(rng) * 0.99;
      c[i] = u(rng) < 0.05;
      m[i] = u(rng) < 0.4;
    }
    for (size_t i = 0; i < 800; ++i) off[i] = u(rng), tgt[i] = u(rng);
    CHECK(testing::rel_error(focal_loss(p, y), oracle::focal(p, y, 2, 4)) <= 1e-9);
    CHECK(testing::rel_error(keypoint_l1_loss(off, tgt, c), oracle::keypoint_l1(off, tgt, c)) <= 1e-9);
    CHECK(testing::rel_error(mask_bce_loss(p, m).value, oracle::bce(p, m)) <= 1e-9);
  }
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const size_t n = 256;
  std::vector<double> p(n), y(n), tgt(2 * n), off(2 * n);
  std::vector<uint8_t> c(n), m(n);
  for (size_t i = 0; i < n; ++i) {
    p[i] = u(rng);
    y[i] = i % 37 == 0 ? 1.0 : u(rng);
    c[i] = i % 11 == 0;
    m[i] = u(rng) < 0.5;
  }
  for (size_t i = 0; i < 2 * n; ++i) off[i] = u(rng), tgt[i] = u(rng);
  std::vector<double> g(n), g2(2 * n), gm(n);
  focal_loss(p, y, {}, g);
  keypoint_l1_loss(off, tgt, c, g2);
  mask_bce_loss(p, m, gm);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  for (int k = 0; k < 20; ++k) {
    const size_t i = pick(rng);
    CHECK(testing::rel_error(g[i], testing::numeric_grad(p, i, [&] { return focal_loss(p, y); })) <= 1e-4);
    CHECK(testing::rel_error(gm[i], testing::numeric_grad(p, i, [&] { return mask_bce_loss(p, m).value; })) <= 1e-4);
    const size_t j = (i / 11) * 11 + (k % 2) * n;  // a center cell
    CHECK(testing::rel_error(g2[j], testing::numeric_grad(off, j, [&] { return keypoint_l1_loss(off, tgt, c); })) <= 1e-4);
  }
}
