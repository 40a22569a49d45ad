#pragma once

#include <span>
#include <string>
#include <vector>

#include "objseg/decode.hpp"
#include "objseg/geometry.hpp"
#include "objseg/scene.hpp"

namespace objseg {

enum class IoUKind { kBox, kMask };

struct MatchPair {
  int prediction = 0;
  int ground_truth = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_predictions;
  std::vector<int> unmatched_ground_truths;
  double threshold = 0.5;
  // Per-prediction flag in the caller's indexing.
  std::vector<bool> prediction_matched;
};

// Greedy matching: predictions in descending score order each claim the
// highest-IoU unclaimed ground truth with IoU >= alpha. `iou` is row-major
// predictions x ground truths.
MatchResult match_by_iou(std::span<const double> iou, std::span<const double> scores, size_t num_gt,
                         double alpha);

MatchResult match_instances(std::span<const InstanceResult> predictions, const Scene& ground_truth,
                            double alpha, IoUKind kind);

// Row-major predictions x ground truths IoU matrix.
std::vector<double> iou_matrix(std::span<const InstanceResult> predictions, const Scene& ground_truth,
                               IoUKind kind);

struct ScoredOutcome {
  double score = 0.0;
  bool true_positive = false;
};

struct ApValue {
  double value = 0.0;
  bool undefined = false;  // no ground truth: value is NaN
};

// VOC2010 all-points AP: area under the right-to-left running maximum of
// precision over the globally score-sorted outcomes (stable for ties).
ApValue average_precision(std::vector<ScoredOutcome> outcomes, size_t num_ground_truth);

// Threshold ladder 0.50, 0.55, ..., 0.95.
std::vector<double> iou_thresholds();

struct MetricReport {
  double ap_box = 0, ap_mask = 0, ap_mask_50 = 0, ap_mask_75 = 0;
  double aiou_50 = 0, aiou_75 = 0;
  double fps = 0;
};

struct MetricFlags {
  bool ap_undefined = false;  // dataset has no ground truth
  bool aiou_50_empty = false;
  bool aiou_75_empty = false;
  size_t images = 0;
  size_t predictions = 0;
  size_t ground_truths = 0;
};

struct ImageMatches {
  std::string id;
  MatchResult box_50;
  MatchResult mask_50;
  MatchResult mask_75;
};

struct Evaluation {
  MetricReport report;
  MetricFlags flags;
  std::vector<ImageMatches> per_image;
};

// Frames per second from per-image wall times (seconds): 1 / median.
double fps_from_timings(std::vector<double> seconds);

// `predictions[i]` are the decoded instances for `ground_truths[i]`.
// Throws InvalidInput on an empty dataset or length mismatch.
Evaluation evaluate(const std::vector<std::vector<InstanceResult>>& predictions,
                    const std::vector<Scene>& ground_truths, std::vector<double> timings = {});

// Mean IoU of pairs matched at alpha (0 with empty = true when none).
struct AiouValue {
  double value = 0.0;
  bool empty = true;
};
AiouValue average_matched_iou(std::span<const MatchResult> matches);

}  // namespace objseg
