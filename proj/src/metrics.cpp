#include "objseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "objseg/errors.hpp"

namespace objseg {

MatchResult match_by_iou(std::span<const double> iou, std::span<const double> scores, size_t num_gt,
                         double alpha) {
  const size_t np = scores.size();
  if (iou.size() != np * num_gt) throw InvalidInput("match_by_iou: IoU matrix shape mismatch");
  std::vector<int> order(np);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

  MatchResult res;
  res.threshold = alpha;
  res.prediction_matched.assign(np, false);
  std::vector<bool> claimed(num_gt, false);
  for (int p : order) {
    int best = -1;
    double best_iou = -1.0;
    for (size_t g = 0; g < num_gt; ++g) {
      if (claimed[g]) continue;
      const double v = iou[size_t(p) * num_gt + g];
      if (v >= alpha && v > best_iou) {
        best = int(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      claimed[best] = true;
      res.prediction_matched[p] = true;
      res.pairs.push_back({p, best, best_iou});
    } else {
      res.unmatched_predictions.push_back(p);
    }
  }
  for (size_t g = 0; g < num_gt; ++g)
    if (!claimed[g]) res.unmatched_ground_truths.push_back(int(g));
  return res;
}

namespace {

struct Extent {
  int x0, y0, x1, y1;
};

Extent extent_of(const Box& b, int H, int W) {
  return {std::max(0, int(std::floor(b.x1))), std::max(0, int(std::floor(b.y1))),
          std::min(W, int(std::ceil(b.x2))), std::min(H, int(std::ceil(b.y2)))};
}

// Mask IoU restricted to the overlap of the two masks' bounding extents;
// foregrounds are assumed to lie inside their extents.
double mask_iou_in_extents(const BinaryMask& a, int64_t count_a, const Extent& ea, const BinaryMask& b,
                           int64_t count_b, const Extent& eb) {
  const int x0 = std::max(ea.x0, eb.x0), x1 = std::min(ea.x1, eb.x1);
  const int y0 = std::max(ea.y0, eb.y0), y1 = std::min(ea.y1, eb.y1);
  int64_t inter = 0;
  for (int r = y0; r < y1; ++r)
    for (int c = x0; c < x1; ++c) inter += (a.at(r, c) && b.at(r, c));
  const int64_t uni = count_a + count_b - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

Extent mask_extent(const BinaryMask& m) {
  if (!m.any()) return {0, 0, 0, 0};
  const Box b = tight_box(m);
  return {int(b.x1), int(b.y1), int(b.x2), int(b.y2)};
}

}  // namespace

std::vector<double> iou_matrix(std::span<const InstanceResult> predictions, const Scene& gt, IoUKind kind) {
  const size_t np = predictions.size(), ng = gt.size();
  std::vector<double> out(np * ng, 0.0);
  if (kind == IoUKind::kBox) {
    for (size_t p = 0; p < np; ++p)
      for (size_t g = 0; g < ng; ++g) out[p * ng + g] = box_iou(predictions[p].detection.box, gt.boxes[g]);
    return out;
  }
  const int H = gt.image.height, W = gt.image.width;
  std::vector<int64_t> gt_count(ng);
  std::vector<Extent> gt_ext(ng);
  for (size_t g = 0; g < ng; ++g) {
    gt_count[g] = gt.instances[g].count();
    gt_ext[g] = extent_of(gt.boxes[g], H, W);
  }
  for (size_t p = 0; p < np; ++p) {
    const BinaryMask& pm = predictions[p].mask;
    if (pm.height() != H || pm.width() != W) throw InvalidInput("iou_matrix: prediction mask shape mismatch");
    const int64_t pc = pm.count();
    const Extent pe = mask_extent(pm);
    for (size_t g = 0; g < ng; ++g)
      out[p * ng + g] = mask_iou_in_extents(pm, pc, pe, gt.instances[g], gt_count[g], gt_ext[g]);
  }
  return out;
}

MatchResult match_instances(std::span<const InstanceResult> predictions, const Scene& ground_truth, double alpha,
                            IoUKind kind) {
  std::vector<double> scores;
  for (const auto& p : predictions) scores.push_back(p.detection.score);
  return match_by_iou(iou_matrix(predictions, ground_truth, kind), scores, ground_truth.size(), alpha);
}

ApValue average_precision(std::vector<ScoredOutcome> outcomes, size_t num_gt) {
  if (num_gt == 0) return {std::numeric_limits<double>::quiet_NaN(), true};
  std::stable_sort(outcomes.begin(), outcomes.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
  const size_t n = outcomes.size();
  std::vector<double> prec(n), rec(n);
  size_t tp = 0, fp = 0;
  for (size_t i = 0; i < n; ++i) {
    outcomes[i].true_positive ? ++tp : ++fp;
    prec[i] = double(tp) / double(tp + fp);
    rec[i] = double(tp) / double(num_gt);
  }
  // Envelope: precision at i becomes max precision at any rank >= i.
  for (size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0, prev_rec = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (rec[i] != prev_rec) {
      ap += (rec[i] - prev_rec) * prec[i];
      prev_rec = rec[i];
    }
  }
  return {ap, false};
}

std::vector<double> iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

double fps_from_timings(std::vector<double> seconds) {
  if (seconds.empty()) return 0.0;
  std::sort(seconds.begin(), seconds.end());
  const size_t n = seconds.size();
  const double median = n % 2 ? seconds[n / 2] : 0.5 * (seconds[n / 2 - 1] + seconds[n / 2]);
  return median > 0 ? 1.0 / median : 0.0;
}

AiouValue average_matched_iou(std::span<const MatchResult> matches) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& m : matches)
    for (const auto& p : m.pairs) {
      sum += p.iou;
      ++n;
    }
  if (n == 0) return {0.0, true};
  return {sum / double(n), false};
}

Evaluation evaluate(const std::vector<std::vector<InstanceResult>>& predictions,
                    const std::vector<Scene>& ground_truths, std::vector<double> timings) {
  if (ground_truths.empty()) throw InvalidInput("evaluate: empty dataset");
  if (predictions.size() != ground_truths.size())
    throw InvalidInput("evaluate: prediction and ground-truth image counts differ");

  const size_t N = ground_truths.size();
  std::vector<std::vector<double>> box_iou_m(N), mask_iou_m(N), scores(N);
  size_t total_gt = 0, total_pred = 0;
  for (size_t i = 0; i < N; ++i) {
    box_iou_m[i] = iou_matrix(predictions[i], ground_truths[i], IoUKind::kBox);
    mask_iou_m[i] = iou_matrix(predictions[i], ground_truths[i], IoUKind::kMask);
    for (const auto& p : predictions[i]) scores[i].push_back(p.detection.score);
    total_gt += ground_truths[i].size();
    total_pred += predictions[i].size();
  }

  auto ap_at = [&](double alpha, IoUKind kind, std::vector<MatchResult>* keep) {
    std::vector<ScoredOutcome> outcomes;
    for (size_t i = 0; i < N; ++i) {
      const auto& m = kind == IoUKind::kBox ? box_iou_m[i] : mask_iou_m[i];
      MatchResult r = match_by_iou(m, scores[i], ground_truths[i].size(), alpha);
      for (size_t p = 0; p < scores[i].size(); ++p) outcomes.push_back({scores[i][p], bool(r.prediction_matched[p])});
      if (keep) keep->push_back(std::move(r));
    }
    return average_precision(std::move(outcomes), total_gt);
  };

  Evaluation ev;
  double box_sum = 0, mask_sum = 0;
  std::vector<MatchResult> box50, mask50, mask75;
  for (double alpha : iou_thresholds()) {
    const bool is50 = alpha == 0.5, is75 = alpha == 0.75;
    const ApValue b = ap_at(alpha, IoUKind::kBox, is50 ? &box50 : nullptr);
    const ApValue m = ap_at(alpha, IoUKind::kMask, is50 ? &mask50 : (is75 ? &mask75 : nullptr));
    box_sum += b.value;
    mask_sum += m.value;
    if (is50) ev.report.ap_mask_50 = m.value;
    if (is75) ev.report.ap_mask_75 = m.value;
    ev.flags.ap_undefined = b.undefined;
  }
  ev.report.ap_box = box_sum / 10.0;
  ev.report.ap_mask = mask_sum / 10.0;
  const AiouValue a50 = average_matched_iou(mask50), a75 = average_matched_iou(mask75);
  ev.report.aiou_50 = a50.value;
  ev.report.aiou_75 = a75.value;
  ev.flags.aiou_50_empty = a50.empty;
  ev.flags.aiou_75_empty = a75.empty;
  ev.report.fps = fps_from_timings(std::move(timings));
  ev.flags.images = N;
  ev.flags.predictions = total_pred;
  ev.flags.ground_truths = total_gt;
  for (size_t i = 0; i < N; ++i)
    ev.per_image.push_back({ground_truths[i].id, std::move(box50[i]), std::move(mask50[i]), std::move(mask75[i])});
  return ev;
}

}  // namespace objseg
