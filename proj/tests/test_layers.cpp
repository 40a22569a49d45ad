#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "helpers.hpp"
#include "objseg/layers.hpp"
#include "objseg/tensor.hpp"

using namespace objseg;
using nn::Tensor;

namespace {

Tensor<double> random_tensor(std::mt19937_64& rng, int n, int c, int h, int w, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(n, c, h, w);
  for (double& v : t.span()) v = u(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Checks d<r, f(x)>/dx against `grad_x` at `samples` random coordinates.
void check_input_grad(Tensor<double>& x, const Tensor<double>& grad_x, const std::function<double()>& loss,
                      std::mt19937_64& rng, int samples = 20, double tol = 1e-4) {
  std::uniform_int_distribution<size_t> pick(0, x.size() - 1);
  for (int k = 0; k < samples; ++k) {
    const size_t i = pick(rng);
    const double keep = x.data()[i];
    const double h = 1e-6;
    x.data()[i] = keep + h;
    const double up = loss();
    x.data()[i] = keep - h;
    const double down = loss();
    x.data()[i] = keep;
    CHECK(testing::rel_error(grad_x.data()[i], (up - down) / (2 * h), 1e-7) <= tol);
  }
}

}  // namespace

TEST_CASE("conv2d gradients (stride 1 and 2, with bias)") {
  std::mt19937_64 rng(1);
  for (int stride : {1, 2}) {
    nn::Conv2d<double> conv("c", 3, 4, 3, stride, 1, true);
    conv.init(rng);
    for (double& v : conv.bias.value.span()) v = 0.1;
    Tensor<double> x = random_tensor(rng, 2, 3, 8, 8);
    const Tensor<double> y = conv.forward(x);
    const Tensor<double> r = random_tensor(rng, y.n(), y.c(), y.h(), y.w());
    conv.weight.grad.fill(0);
    conv.bias.grad.fill(0);
    const Tensor<double> gx = conv.backward(r);
    auto loss = [&] { return dot(conv.forward(x), r); };
    check_input_grad(x, gx, loss, rng);
    const Tensor<double> gw = conv.weight.grad, gb = conv.bias.grad;
    check_input_grad(conv.weight.value, gw, loss, rng);
    check_input_grad(conv.bias.value, gb, loss, rng, 4);
  }
}

TEST_CASE("conv2d matches a direct convolution") {
  std::mt19937_64 rng(2);
  nn::Conv2d<double> conv("c", 2, 3, 3, 2, 1, true);
  conv.init(rng);
  for (double& v : conv.bias.value.span()) v = 0.25;
  const Tensor<double> x = random_tensor(rng, 1, 2, 7, 6);
  const Tensor<double> y = conv.forward(x);
  REQUIRE(y.h() == 4);
  REQUIRE(y.w() == 3);
  for (int o = 0; o < 3; ++o)
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c) {
        double s = 0.25;
        for (int i = 0; i < 2; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int yy = r * 2 - 1 + ky, xx = c * 2 - 1 + kx;
              if (yy >= 0 && yy < 7 && xx >= 0 && xx < 6) s += conv.weight.value.at(o, i, ky, kx) * x.at(0, i, yy, xx);
            }
        CHECK(y.at(0, o, r, c) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("batchnorm training-mode gradients") {
  std::mt19937_64 rng(3);
  nn::BatchNorm2d<double> bn("bn", 3);
  for (double& v : bn.gamma.value.span()) v = 1.5;
  Tensor<double> x = random_tensor(rng, 2, 3, 4, 4);
  const Tensor<double> y = bn.forward(x, true);
  const Tensor<double> r = random_tensor(rng, 2, 3, 4, 4);
  bn.gamma.grad.fill(0);
  bn.beta.grad.fill(0);
  const Tensor<double> gx = bn.backward(r);
  auto loss = [&] { return dot(bn.forward(x, true), r); };
  check_input_grad(x, gx, loss, rng);
  const Tensor<double> gg = bn.gamma.grad;
  check_input_grad(bn.gamma.value, gg, loss, rng, 3);
}

TEST_CASE("instance norm examples") {
  nn::InstanceNorm2d<double> in("in", 1, 1e-12);
  Tensor<double> x(1, 1, 1, 2);
  x.at(0, 0, 0, 0) = 0;
  x.at(0, 0, 0, 1) = 2;
  Tensor<double> y = in.forward(x);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(-1.0));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(1.0));
  in.gamma.value.fill(2);
  in.beta.value.fill(1);
  y = in.forward(x);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(-1.0));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(3.0));

  nn::InstanceNorm2d<double> in2("in", 2);
  Tensor<double> c(1, 2, 3, 3, 4.2);
  const Tensor<double> zc = in2.forward(c);
  for (double v : zc.span()) CHECK(v == 0.0);
}

TEST_CASE("instance norm gradients") {
  std::mt19937_64 rng(4);
  nn::InstanceNorm2d<double> in("in", 3);
  for (double& v : in.gamma.value.span()) v = 0.7;
  for (double& v : in.beta.value.span()) v = -0.2;
  Tensor<double> x = random_tensor(rng, 2, 3, 5, 5);
  const Tensor<double> y = in.forward(x);
  const Tensor<double> r = random_tensor(rng, 2, 3, 5, 5);
  in.gamma.grad.fill(0);
  in.beta.grad.fill(0);
  const Tensor<double> gx = in.backward(r);
  auto loss = [&] { return dot(in.forward(x), r); };
  check_input_grad(x, gx, loss, rng);
  const Tensor<double> gg = in.gamma.grad, gb = in.beta.grad;
  check_input_grad(in.gamma.value, gg, loss, rng, 3);
  check_input_grad(in.beta.value, gb, loss, rng, 3);
}

TEST_CASE("upsample2x values and adjoint") {
  Tensor<double> x(1, 1, 1, 2);
  x.at(0, 0, 0, 0) = 0;
  x.at(0, 0, 0, 1) = 4;
  const Tensor<double> y = nn::upsample2x(x);
  REQUIRE(y.w() == 4);
  // Half-pixel centres: source coordinates -0.25, 0.25, 0.75, 1.25 clamped at the border.
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.0));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(1.0));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(3.0));
  CHECK(y.at(0, 0, 0, 3) == doctest::Approx(4.0));

  std::mt19937_64 rng(5);
  const Tensor<double> a = random_tensor(rng, 2, 3, 4, 5);
  const Tensor<double> b = random_tensor(rng, 2, 3, 8, 10);
  CHECK(dot(nn::upsample2x(a), b) == doctest::Approx(dot(a, nn::upsample2x_backward(b))).epsilon(1e-12));
}

TEST_CASE("crop_resize identity, constant and ramp oracles") {
  std::mt19937_64 rng(6);
  const Tensor<double> f = random_tensor(rng, 1, 2, 8, 8);
  const std::vector<nn::RoiRef> full{{0, {0, 0, 16, 16}}};
  const Tensor<double> same = nn::crop_resize(f, std::span<const nn::RoiRef>(full), 2.0, 8);
  for (size_t i = 0; i < f.size(); ++i) CHECK(same.data()[i] == doctest::Approx(f.data()[i]).epsilon(1e-9));

  Tensor<double> k(1, 1, 6, 6, 3.5);
  const std::vector<nn::RoiRef> inner{{0, {1.3, 0.7, 4.2, 5.1}}};
  const Tensor<double> kc = nn::crop_resize(k, std::span<const nn::RoiRef>(inner), 1.0, 5);
  for (double v : kc.span()) CHECK(v == doctest::Approx(3.5));

  // f(x, y) = 2x + 3y + 1 at pixel centres; bilinear is exact for linear fields inside the map.
  Tensor<double> ramp(1, 1, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) ramp.at(0, 0, y, x) = 2 * x + 3 * y + 1;
  const Box box{4, 2, 12, 14};  // half width of the map
  const int G = 10;
  const std::vector<nn::RoiRef> half{{0, box}};
  const Tensor<double> out = nn::crop_resize(ramp, std::span<const nn::RoiRef>(half), 1.0, G);
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) {
      const double u = box.x1 + (j + 0.5) * box.width() / G - 0.5;
      const double v = box.y1 + (i + 0.5) * box.height() / G - 0.5;
      CHECK(out.at(0, 0, i, j) == doctest::Approx(2 * u + 3 * v + 1).epsilon(1e-9));
    }
}

TEST_CASE("crop_resize backward is the adjoint and reads zero outside") {
  std::mt19937_64 rng(7);
  const Tensor<double> f = random_tensor(rng, 2, 3, 6, 7);
  const std::vector<nn::RoiRef> rois{{0, {-3, -2, 9, 7}}, {1, {2.5, 1.5, 13.5, 11.8}}, {1, {0, 0, 14, 12}}};
  const Tensor<double> y = nn::crop_resize(f, std::span<const nn::RoiRef>(rois), 2.0, 5);
  const Tensor<double> r = random_tensor(rng, y.n(), y.c(), y.h(), y.w());
  Tensor<double> g = Tensor<double>::zeros_like(f);
  nn::crop_resize_backward(r, std::span<const nn::RoiRef>(rois), 2.0, g);
  CHECK(dot(y, r) == doctest::Approx(dot(f, g)).epsilon(1e-12));

  Tensor<double> ones(1, 1, 4, 4, 1.0);
  const std::vector<nn::RoiRef> outside{{0, {20, 20, 28, 28}}};
  const Tensor<double> oc = nn::crop_resize(ones, std::span<const nn::RoiRef>(outside), 1.0, 3);
  for (double v : oc.span()) CHECK(v == 0.0);
}
