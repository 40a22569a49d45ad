#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "objseg/errors.hpp"
#include "objseg/model.hpp"
#include "objseg/pipeline.hpp"

using namespace objseg;
using nn::Tensor;

namespace {

ModelConfig tiny(Variant v = Variant::kObjBranchIN) {
  ModelConfig c;
  c.encoder_widths = {4, 6, 8, 8, 8};
  c.decoder_widths = {8, 6, 6};
  c.head_width = 4;
  c.seg_width = 4;
  c.roi_grid = 16;
  c.variant = v;
  c.init_seed = 9;
  return c;
}

template <typename T>
Tensor<T> random_images(std::mt19937_64& rng, int n, int size) {
  std::uniform_real_distribution<double> u(0, 1);
  Tensor<T> t(n, 3, size, size);
  for (T& v : t.span()) v = T(u(rng));
  return t;
}

nn::Parameter<double>* find_param(nn::ParamList<double>& ps, const std::string& prefix) {
  for (auto* p : ps)
    if (p->name.starts_with(prefix) && p->name.ends_with(".weight") && p->trainable) return p;
  return nullptr;
}

}  // namespace

TEST_CASE("detection output shapes and ranges") {
  std::mt19937_64 rng(1);
  ModelConfig c = tiny();
  ObjectGuidedNet<float> net(c);
  const DetectionOutput<float> out = net.forward_detection(random_images<float>(rng, 2, 128), false);
  CHECK(out.heatmap.shape() == std::array<int, 4>{2, 1, 32, 32});
  CHECK(out.offsets.shape() == std::array<int, 4>{2, 2, 32, 32});
  CHECK(out.wh.shape() == std::array<int, 4>{2, 2, 32, 32});
  for (float v : out.heatmap.span()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
  CHECK_THROWS_AS(net.forward_detection(random_images<float>(rng, 1, 48), false), InvalidInput);

  c.stride = 2;
  c.decoder_widths = {8, 6, 6, 6};
  ObjectGuidedNet<float> s2(c);
  CHECK(s2.forward_detection(random_images<float>(rng, 1, 64), false).heatmap.shape() ==
        std::array<int, 4>{1, 1, 32, 32});
}

TEST_CASE("segmentation output shapes and determinism") {
  std::mt19937_64 rng(2);
  ObjectGuidedNet<float> net(tiny());
  const Tensor<float> x = random_images<float>(rng, 2, 64);
  const auto d1 = net.forward_detection(x, false);
  CHECK(net.forward_segmentation({}).shape() == std::array<int, 4>{0, 1, 16, 16});
  const std::vector<nn::RoiRef> rois{{0, {3, 4, 30, 20}}, {1, {10, 10, 60, 62}}, {1, {0.5, 0.5, 8, 9}}};
  const Tensor<float> m1 = net.forward_segmentation(rois);
  CHECK(m1.shape() == std::array<int, 4>{3, 1, 16, 16});
  const auto d2 = net.forward_detection(x, false);
  const Tensor<float> m2 = net.forward_segmentation(rois);
  for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.data()[i] == m2.data()[i]);
  for (size_t i = 0; i < d1.heatmap.size(); ++i) CHECK(d1.heatmap.data()[i] == d2.heatmap.data()[i]);
  ObjectGuidedNet<float> twin(tiny());
  twin.forward_detection(x, false);
  const Tensor<float> m3 = twin.forward_segmentation(rois);
  for (size_t i = 0; i < m1.size(); ++i) CHECK(m1.data()[i] == m3.data()[i]);
  const std::vector<nn::RoiRef> bad{{0, {5, 5, 5, 9}}};
  CHECK_THROWS_AS(net.forward_segmentation(bad), InvalidInput);
}

TEST_CASE("variants: only object-guided branches read detection features") {
  std::mt19937_64 rng(3);
  const Tensor<double> x = random_images<double>(rng, 1, 64);
  const std::vector<nn::RoiRef> rois{{0, {5, 6, 40, 50}}};
  for (Variant v : {Variant::kObjBranch, Variant::kSepBranchIN, Variant::kObjBranchIN}) {
    ObjectGuidedNet<double> net(tiny(v));
    net.forward_detection(x, false);
    const Tensor<double> before = net.forward_segmentation(rois);
    auto ps = net.parameters();
    for (auto* p : ps)
      if (p->name.starts_with("detection.up") && p->trainable)
        for (double& w : p->value.span()) w *= 1.7;
    net.forward_detection(x, false);
    const Tensor<double> after = net.forward_segmentation(rois);
    double diff = 0;
    for (size_t i = 0; i < before.size(); ++i) diff += std::abs(before.data()[i] - after.data()[i]);
    if (uses_object_features(v)) CHECK(diff > 1e-6);
    else CHECK(diff == 0.0);
    CHECK(net.segmentation_norms().empty() == !uses_instance_norm(v));
  }
}

TEST_CASE("post-norm RoI statistics at initialisation") {
  std::mt19937_64 rng(4);
  ObjectGuidedNet<double> net(tiny());
  net.forward_detection(random_images<double>(rng, 2, 64), false);
  const std::vector<nn::RoiRef> rois{{0, {2, 3, 40, 33}}, {1, {20, 18, 63, 60}}, {1, {7, 1, 19, 15}}};
  net.forward_segmentation(rois);
  const auto norms = net.segmentation_norms();
  REQUIRE(norms.size() == 6);
  for (const auto* in : norms) {
    const Tensor<double>& x = in->input();
    const Tensor<double>& y = in->normalized();
    for (int r = 0; r < y.n(); ++r)
      for (int c = 0; c < y.c(); ++c) {
        const size_t n = y.plane_size();
        auto stats = [n](const double* p) {
          double mean = 0, var = 0;
          for (size_t i = 0; i < n; ++i) mean += p[i];
          mean /= double(n);
          for (size_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
          return std::pair{mean, var / double(n)};
        };
        const auto [in_mean, in_var] = stats(x.plane(r, c));
        const auto [mean, var] = stats(y.plane(r, c));
        CHECK(std::abs(mean) <= 1e-5);
        if (in_var > 0) {
          CHECK(std::abs(std::sqrt(var) * std::sqrt((in_var + in->epsilon()) / in_var) - 1) <= 1e-3);
        } else {
          CHECK(var == 0.0);
        }
      }
  }
}

TEST_CASE("total loss gradient reaches encoder, heads and segmentation weights") {
  std::mt19937_64 rng(5);
  RunConfig cfg;
  cfg.model = tiny();
  ObjectGuidedNet<double> net(cfg.model);
  std::vector<Scene> scenes;
  for (int i = 0; i < 2; ++i) {
    Image img(3, 64, 64);
    std::uniform_real_distribution<float> u(0, 1);
    for (float& v : img.pixels) v = u(rng);
    scenes.push_back(Scene::make("s" + std::to_string(i), img,
                                 {testing::rect_mask(64, 64, 5 + i, 6, 25, 30), testing::rect_mask(64, 64, 34, 30, 58, 51 - i)}));
  }
  const TrainBatch batch = make_batch(scenes, cfg, nullptr);
  net.zero_grad();
  loss_step(net, batch, cfg, true, true);
  auto ps = net.parameters();
  for (const char* prefix : {"encoder.layer1", "encoder.layer3", "encoder.layer5", "detection.up", "detection.wh",
                             "segmentation.level0", "segmentation.level3"}) {
    auto* p = find_param(ps, prefix);
    REQUIRE_MESSAGE(p, prefix);
    // Coordinates whose gradient is not negligible next to the tensor's largest.
    double gmax = 0;
    for (double g : p->grad.span()) gmax = std::max(gmax, std::abs(g));
    REQUIRE(gmax > 0);
    std::vector<size_t> strong;
    for (size_t i = 0; i < p->grad.size(); ++i)
      if (std::abs(p->grad.data()[i]) >= 0.1 * gmax) strong.push_back(i);
    std::uniform_int_distribution<size_t> pick(0, strong.size() - 1);
    for (int k = 0; k < 3; ++k) {
      const size_t i = strong[pick(rng)];
      const double keep = p->value.data()[i], h = 1e-6;
      p->value.data()[i] = keep + h;
      const double up = loss_step(net, batch, cfg, true, false).total;
      p->value.data()[i] = keep - h;
      const double down = loss_step(net, batch, cfg, true, false).total;
      p->value.data()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      INFO(p->name << "[" << i << "] analytic " << p->grad.data()[i] << " numeric " << numeric);
      CHECK(testing::rel_error(p->grad.data()[i], numeric, 1e-6) <= 1e-3);
    }
  }
}
