#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "objseg/encoding.hpp"

namespace objseg {

inline constexpr double kProbEpsilon = 1e-6;

struct FocalConfig {
  double alpha = 2.0;
  double beta = 4.0;
};

// Penalty-reduced focal loss over a flattened heatmap. Cells whose target is
// exactly 1 are positives; N = max(1, #positives). If `grad` is non-empty it
// receives dL/dpred (zero where the prediction is clamped).
double focal_loss(std::span<const double> pred, std::span<const double> target,
                  const FocalConfig& cfg = {}, std::span<double> grad = {});

// Mean |pred - target| over channels at center cells. Maps are C planes of
// `center_mask.size()` cells each. Returns 0 when there are no centers.
double keypoint_l1_loss(std::span<const double> pred, std::span<const double> target,
                        std::span<const uint8_t> center_mask, std::span<double> grad = {});

struct MaskLoss {
  double value = 0.0;
  bool empty = false;  // no RoI pixels
};

// Mean binary cross-entropy over all RoI pixels.
MaskLoss mask_bce_loss(std::span<const double> pred, std::span<const uint8_t> target,
                       std::span<double> grad = {});
MaskLoss mask_bce_loss(std::span<const double> pred, const std::vector<RoIMaskTarget>& targets,
                       std::span<double> grad = {});

struct LossWeights {
  double offset = 1.0;
  double wh = 0.1;
  double mask = 1.0;
};

struct LossBreakdown {
  double heatmap_loss = 0;
  double offset_loss = 0;
  double wh_loss = 0;
  double mask_loss = 0;
  double total = 0;
  LossWeights weights;
};

LossBreakdown total_loss(double heatmap_loss, double offset_loss, double wh_loss,
                         double mask_loss, const LossWeights& weights = {});

}  // namespace objseg
