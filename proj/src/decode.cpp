#include "objseg/decode.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "objseg/errors.hpp"

namespace objseg {

Grid nms_maxpool(const Grid& heatmap) {
  Grid out(heatmap.channels, heatmap.height, heatmap.width);
  const int H = heatmap.height, W = heatmap.width;
  for (int c = 0; c < heatmap.channels; ++c) {
    for (int r = 0; r < H; ++r) {
      for (int x = 0; x < W; ++x) {
        const double v = heatmap.at(c, r, x);
        double m = v;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dx = -1; dx <= 1; ++dx) {
            const int rr = r + dr, xx = x + dx;
            if (rr >= 0 && rr < H && xx >= 0 && xx < W) m = std::max(m, heatmap.at(c, rr, xx));
          }
        out.at(c, r, x) = v >= m ? v : 0.0;
      }
    }
  }
  return out;
}

std::vector<Detection> topk_decode(const Grid& heatmap, const Grid& offsets, const Grid& wh, int stride,
                                   int image_height, int image_width, const DecodeOptions& options) {
  if (offsets.channels != 2 || wh.channels != 2 || offsets.height != heatmap.height ||
      offsets.width != heatmap.width || wh.height != heatmap.height || wh.width != heatmap.width)
    throw InvalidInput("topk_decode: head shapes disagree");
  const Grid peaks = nms_maxpool(heatmap);

  struct Candidate {
    double score;
    int c, r, x;
  };
  std::vector<Candidate> cands;
  for (int c = 0; c < peaks.channels; ++c)
    for (int r = 0; r < peaks.height; ++r)
      for (int x = 0; x < peaks.width; ++x) {
        const double v = peaks.at(c, r, x);
        if (v > 0.0 && v >= options.score_threshold) cands.push_back({v, c, r, x});
      }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.c, a.r, a.x) < std::tie(b.c, b.r, b.x);
  });
  if (cands.size() > size_t(std::max(0, options.max_detections))) cands.resize(std::max(0, options.max_detections));

  std::vector<Detection> out;
  out.reserve(cands.size());
  for (const auto& k : cands) {
    const double cx = (k.x + offsets.at(0, k.r, k.x)) * stride;
    const double cy = (k.r + offsets.at(1, k.r, k.x)) * stride;
    const double w = std::max(0.0, wh.at(0, k.r, k.x)), h = std::max(0.0, wh.at(1, k.r, k.x));
    Detection d;
    d.box = Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}.clamped(image_width, image_height);
    d.score = k.score;
    d.class_id = k.c;
    d.center_cell = {k.r, k.x};
    out.push_back(d);
  }
  return out;
}

PasteResult paste_masks(std::span<const Detection> detections, std::span<const double> grids, int grid_size,
                        int image_height, int image_width, double mask_threshold) {
  const size_t cell = size_t(grid_size) * grid_size;
  if (grids.size() != detections.size() * cell) throw InvalidInput("paste_masks: one grid per detection required");
  PasteResult res;
  for (size_t i = 0; i < detections.size(); ++i) {
    const Detection& det = detections[i];
    const Box b = det.box.clamped(image_width, image_height);
    const int x0 = std::max(0, int(std::floor(b.x1))), x1 = std::min(image_width, int(std::ceil(b.x2)));
    const int y0 = std::max(0, int(std::floor(b.y1))), y1 = std::min(image_height, int(std::ceil(b.y2)));
    if (x1 <= x0 || y1 <= y0 || b.width() <= 0 || b.height() <= 0) {
      res.dropped.push_back(i);
      continue;
    }
    const double* g = grids.data() + i * cell;
    auto sample = [&](double u, double v) {
      u = std::clamp(u, 0.0, double(grid_size - 1));
      v = std::clamp(v, 0.0, double(grid_size - 1));
      const int i0 = int(std::floor(v)), j0 = int(std::floor(u));
      const int i1 = std::min(i0 + 1, grid_size - 1), j1 = std::min(j0 + 1, grid_size - 1);
      const double fv = v - i0, fu = u - j0;
      return (1 - fv) * ((1 - fu) * g[size_t(i0) * grid_size + j0] + fu * g[size_t(i0) * grid_size + j1]) +
             fv * ((1 - fu) * g[size_t(i1) * grid_size + j0] + fu * g[size_t(i1) * grid_size + j1]);
    };
    InstanceResult inst{det, BinaryMask(image_height, image_width)};
    inst.detection.box = b;
    bool any = false;
    for (int r = y0; r < y1; ++r) {
      const double v = ((r + 0.5) - b.y1) / b.height() * grid_size - 0.5;
      for (int c = x0; c < x1; ++c) {
        const double u = ((c + 0.5) - b.x1) / b.width() * grid_size - 0.5;
        if (sample(u, v) > mask_threshold) {
          inst.mask.set(r, c);
          any = true;
        }
      }
    }
    if (!any) res.empty.push_back(res.instances.size());
    res.instances.push_back(std::move(inst));
  }
  return res;
}

}  // namespace objseg
