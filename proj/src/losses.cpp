#include "objseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "objseg/errors.hpp"

namespace objseg {

double focal_loss(std::span<const double> pred, std::span<const double> target,
                  const FocalConfig& cfg, std::span<double> grad) {
  if (pred.size() != target.size()) throw InvalidInput("focal_loss: shape mismatch");
  if (!grad.empty() && grad.size() != pred.size())
    throw InvalidInput("focal_loss: gradient buffer size mismatch");
  const double a = cfg.alpha, b = cfg.beta;
  size_t positives = 0;
  for (double y : target) positives += (y == 1.0);
  const double inv_n = 1.0 / static_cast<double>(std::max<size_t>(1, positives));

  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kProbEpsilon, 1.0 - kProbEpsilon);
    const bool inside = raw > kProbEpsilon && raw < 1.0 - kProbEpsilon;
    const double y = target[i];
    double term, dterm;
    if (y == 1.0) {
      const double q = 1.0 - p;
      term = std::pow(q, a) * std::log(p);
      dterm = -a * std::pow(q, a - 1.0) * std::log(p) + std::pow(q, a) / p;
    } else {
      const double w = std::pow(1.0 - y, b);
      const double la = std::log1p(-p);
      term = w * std::pow(p, a) * la;
      dterm = w * (a * std::pow(p, a - 1.0) * la - std::pow(p, a) / (1.0 - p));
    }
    sum += term;
    if (!grad.empty()) grad[i] = inside ? -inv_n * dterm : 0.0;
  }
  return -sum * inv_n;
}

double keypoint_l1_loss(std::span<const double> pred, std::span<const double> target,
                        std::span<const uint8_t> center_mask, std::span<double> grad) {
  if (pred.size() != target.size()) throw InvalidInput("keypoint_l1_loss: shape mismatch");
  const size_t plane = center_mask.size();
  if (plane == 0 || pred.size() % plane != 0)
    throw InvalidInput("keypoint_l1_loss: maps are not a whole number of planes");
  const size_t channels = pred.size() / plane;
  if (!grad.empty()) {
    if (grad.size() != pred.size()) throw InvalidInput("keypoint_l1_loss: gradient size");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  size_t centers = 0;
  for (uint8_t m : center_mask) centers += (m != 0);
  if (centers == 0) return 0.0;

  const double inv = 1.0 / static_cast<double>(centers * channels);
  double sum = 0.0;
  for (size_t c = 0; c < channels; ++c) {
    for (size_t i = 0; i < plane; ++i) {
      if (!center_mask[i]) continue;
      const size_t k = c * plane + i;
      const double d = pred[k] - target[k];
      sum += std::abs(d);
      if (!grad.empty()) grad[k] = d > 0 ? inv : (d < 0 ? -inv : 0.0);
    }
  }
  return sum * inv;
}

MaskLoss mask_bce_loss(std::span<const double> pred, std::span<const uint8_t> target,
                       std::span<double> grad) {
  if (pred.size() != target.size()) throw InvalidInput("mask_bce_loss: shape mismatch");
  if (!grad.empty() && grad.size() != pred.size())
    throw InvalidInput("mask_bce_loss: gradient buffer size mismatch");
  if (pred.empty()) return {0.0, true};
  const double inv = 1.0 / static_cast<double>(pred.size());
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, kProbEpsilon, 1.0 - kProbEpsilon);
    const bool inside = raw > kProbEpsilon && raw < 1.0 - kProbEpsilon;
    if (target[i]) {
      sum -= std::log(p);
      if (!grad.empty()) grad[i] = inside ? -inv / p : 0.0;
    } else {
      sum -= std::log1p(-p);
      if (!grad.empty()) grad[i] = inside ? inv / (1.0 - p) : 0.0;
    }
  }
  return {sum * inv, false};
}

MaskLoss mask_bce_loss(std::span<const double> pred, const std::vector<RoIMaskTarget>& targets,
                       std::span<double> grad) {
  std::vector<uint8_t> flat;
  for (const auto& t : targets) flat.insert(flat.end(), t.grid.begin(), t.grid.end());
  return mask_bce_loss(pred, flat, grad);
}

LossBreakdown total_loss(double heatmap_loss, double offset_loss, double wh_loss,
                         double mask_loss, const LossWeights& weights) {
  LossBreakdown out;
  out.heatmap_loss = heatmap_loss;
  out.offset_loss = offset_loss;
  out.wh_loss = wh_loss;
  out.mask_loss = mask_loss;
  out.weights = weights;
  out.total = heatmap_loss + weights.offset * offset_loss + weights.wh * wh_loss +
              weights.mask * mask_loss;
  return out;
}

}  // namespace objseg
