#include "objseg/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "objseg/errors.hpp"

namespace fs = std::filesystem;

namespace objseg {

void SynthConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    throw InvalidInput("synth: image_size must be a positive multiple of 32");
  if (min_instances < 0 || max_instances < min_instances)
    throw InvalidInput("synth: bad instance count range");
  if (!(min_axis > 0) || max_axis < min_axis) throw InvalidInput("synth: bad axis range");
  if (min_protrusions < 0 || max_protrusions < min_protrusions)
    throw InvalidInput("synth: bad protrusion count range");
  if (min_protrusion_length < 0 || max_protrusion_length < min_protrusion_length)
    throw InvalidInput("synth: bad protrusion length range");
  if (!(touching_fraction >= 0 && touching_fraction <= 1))
    throw InvalidInput("synth: touching_fraction must lie in [0, 1]");
}

std::mt19937_64 split_stream(uint64_t seed, uint64_t index) {
  std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(index), uint32_t(index >> 32),
                    0x6f626a73u};
  return std::mt19937_64(seq);
}

bool masks_touch(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width()) return false;
  const int H = a.height(), W = a.width();
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!a.at(r, c)) continue;
      if (b.at(r, c)) return true;
      if ((r > 0 && b.at(r - 1, c)) || (r + 1 < H && b.at(r + 1, c)) || (c > 0 && b.at(r, c - 1)) ||
          (c + 1 < W && b.at(r, c + 1)))
        return true;
    }
  }
  return false;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// A rendered shape: pixel offsets relative to an integer anchor, plus a
// normalised radial coordinate per pixel used for shading.
struct Blob {
  std::vector<std::pair<int, int>> pixels;  // (dy, dx)
  std::vector<float> radial;
  int reach = 0;
};

Blob make_blob(const SynthConfig& cfg, std::mt19937_64& rng) {
  const double a = uniform(rng, cfg.min_axis, cfg.max_axis);
  const double b = std::max(cfg.min_axis * 0.6, a * uniform(rng, 0.6, 1.0));
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  const double wobble = uniform(rng, 0.0, 0.12);
  const int lobes = uniform_int(rng, 2, 4);
  const double phase = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double fx = uniform(rng, 0.0, 1.0), fy = uniform(rng, 0.0, 1.0);

  struct Segment {
    double x0, y0, x1, y1, half_width;
  };
  std::vector<Segment> arms;
  const int n_arms = uniform_int(rng, cfg.min_protrusions, cfg.max_protrusions);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int k = 0; k < n_arms; ++k) {
    const double psi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double len = uniform(rng, cfg.min_protrusion_length, cfg.max_protrusion_length);
    const double half = 0.5 * uniform(rng, 1.0, 2.0);
    const double ex = 0.85 * a * std::cos(psi), ey = 0.85 * b * std::sin(psi);
    const double sx = ct * ex - st * ey, sy = st * ex + ct * ey;
    const double norm = std::max(1e-9, std::hypot(sx, sy));
    const double turn = uniform(rng, -0.4, 0.4);
    const double dx = std::cos(turn) * sx / norm - std::sin(turn) * sy / norm;
    const double dy = std::sin(turn) * sx / norm + std::cos(turn) * sy / norm;
    const double reach = std::hypot(a * std::cos(psi), b * std::sin(psi)) * (1 + wobble);
    arms.push_back({sx, sy, sx + dx * (reach - 0.85 * norm + len), sy + dy * (reach - 0.85 * norm + len),
                    half});
  }

  Blob blob;
  blob.reach = static_cast<int>(std::ceil(std::max(a, b) * (1 + wobble) + cfg.max_protrusion_length + 2));
  for (int dy = -blob.reach; dy <= blob.reach; ++dy) {
    for (int dx = -blob.reach; dx <= blob.reach; ++dx) {
      const double px = dx + 0.5 - fx, py = dy + 0.5 - fy;
      const double u = ct * px + st * py, v = -st * px + ct * py;
      const double phi = std::atan2(v, u);
      const double limit = 1.0 + wobble * std::cos(lobes * phi + phase);
      const double rn = std::hypot(u / a, v / b) / limit;
      bool inside = rn <= 1.0;
      double radial = rn;
      if (!inside) {
        for (const auto& s : arms) {
          const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
          const double t = std::clamp(((px - s.x0) * vx + (py - s.y0) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
          if (std::hypot(px - (s.x0 + t * vx), py - (s.y0 + t * vy)) <= s.half_width) {
            inside = true;
            radial = 1.0;
            break;
          }
        }
      }
      if (inside) {
        blob.pixels.emplace_back(dy, dx);
        blob.radial.push_back(static_cast<float>(std::min(1.0, radial)));
      }
    }
  }
  return blob;
}

struct Canvas {
  int size;
  std::vector<int> owner;  // -1 background

  explicit Canvas(int s) : size(s), owner(size_t(s) * s, -1) {}
  int at(int r, int c) const { return owner[size_t(r) * size + c]; }
};

struct Placement {
  int row = 0, col = 0;
};

bool inside_image(const Blob& b, Placement p, int size) {
  for (auto [dy, dx] : b.pixels) {
    const int r = p.row + dy, c = p.col + dx;
    if (r < 1 || c < 1 || r >= size - 1 || c >= size - 1) return false;
  }
  return true;
}

bool overlaps(const Blob& b, Placement p, const Canvas& canvas) {
  for (auto [dy, dx] : b.pixels)
    if (canvas.at(p.row + dy, p.col + dx) >= 0) return true;
  return false;
}

bool touches(const Blob& b, Placement p, const Canvas& canvas, int target) {
  static constexpr int kN[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (auto [dy, dx] : b.pixels) {
    for (auto& d : kN) {
      const int r = p.row + dy + d[0], c = p.col + dx + d[1];
      if (r < 0 || c < 0 || r >= canvas.size || c >= canvas.size) continue;
      if (canvas.at(r, c) == target) return true;
    }
  }
  return false;
}

struct IntBox {
  int x1, y1, x2, y2;
};

IntBox blob_box(const Blob& b, Placement p) {
  IntBox box{1 << 30, 1 << 30, -(1 << 30), -(1 << 30)};
  for (auto [dy, dx] : b.pixels) {
    box.x1 = std::min(box.x1, p.col + dx);
    box.y1 = std::min(box.y1, p.row + dy);
    box.x2 = std::max(box.x2, p.col + dx + 1);
    box.y2 = std::max(box.y2, p.row + dy + 1);
  }
  return box;
}

bool boxes_separated(const IntBox& a, const IntBox& b) {
  const int gap = std::max({b.x1 - a.x2, a.x1 - b.x2, b.y1 - a.y2, a.y1 - b.y2});
  return gap >= 1;
}

void stamp(const Blob& b, Placement p, Canvas& canvas, int id) {
  for (auto [dy, dx] : b.pixels) canvas.owner[size_t(p.row + dy) * canvas.size + p.col + dx] = id;
}

// Slides the blob toward `anchor` along a ray using unit axis steps; the last
// overlap-free position before contact is 4-adjacent to whatever it hit.
bool place_touching(const Blob& blob, Placement anchor, int anchor_id, int anchor_reach,
                    const Canvas& canvas, std::mt19937_64& rng, Placement& out) {
  for (int attempt = 0; attempt < 24; ++attempt) {
    const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double start = anchor_reach + blob.reach + 2;
    double x = anchor.col + start * std::cos(phi), y = anchor.row + start * std::sin(phi);
    Placement cur{int(std::lround(y)), int(std::lround(x))};
    Placement prev = cur;
    bool ok = false;
    for (int step = 0; step < 4 * (static_cast<int>(start) + 2); ++step) {
      const int ddx = anchor.col - cur.col, ddy = anchor.row - cur.row;
      if (ddx == 0 && ddy == 0) break;
      prev = cur;
      if (std::abs(ddx) >= std::abs(ddy))
        cur.col += ddx > 0 ? 1 : -1;
      else
        cur.row += ddy > 0 ? 1 : -1;
      bool in_bounds = true;
      for (auto [dy, dx] : blob.pixels) {
        const int r = cur.row + dy, c = cur.col + dx;
        if (r < 0 || c < 0 || r >= canvas.size || c >= canvas.size) {
          in_bounds = false;
          break;
        }
      }
      if (!in_bounds) continue;
      if (overlaps(blob, cur, canvas)) {
        ok = inside_image(blob, prev, canvas.size) && !overlaps(blob, prev, canvas) &&
             touches(blob, prev, canvas, anchor_id);
        break;
      }
    }
    if (ok) {
      out = prev;
      return true;
    }
  }
  return false;
}

}  // namespace

GeneratedScene generate_scene(const SynthConfig& cfg, uint64_t index) {
  cfg.validate();
  auto rng = split_stream(cfg.seed, index);
  const int S = cfg.image_size;
  const int requested = uniform_int(rng, cfg.min_instances, cfg.max_instances);

  int want_touching = static_cast<int>(std::lround(cfg.touching_fraction * requested));
  if (want_touching == 1 && requested >= 2) want_touching = 2;

  Canvas canvas(S);
  std::vector<Blob> blobs;
  std::vector<Placement> places;
  std::vector<bool> is_touching;
  std::vector<std::pair<int, int>> pairs;
  int touching_count = 0;

  for (int k = 0; k < requested; ++k) {
    const int need = want_touching - touching_count;
    bool placed = false;
    for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
      Blob blob = make_blob(cfg, rng);
      if (blob.pixels.empty()) continue;
      Placement p;
      int partner = -1;
      if (need > 0 && !blobs.empty()) {
        // Prefer a lone partner when two new contacts are still needed.
        std::vector<int> candidates;
        for (int j = 0; j < int(blobs.size()); ++j)
          if ((need >= 2) != bool(is_touching[j])) candidates.push_back(j);
        if (candidates.empty())
          for (int j = 0; j < int(blobs.size()); ++j) candidates.push_back(j);
        partner = candidates[uniform_int(rng, 0, int(candidates.size()) - 1)];
        if (!place_touching(blob, places[partner], partner, blobs[partner].reach, canvas, rng, p)) continue;
      } else {
        p = {uniform_int(rng, 1, S - 2), uniform_int(rng, 1, S - 2)};
        if (!inside_image(blob, p, S) || overlaps(blob, p, canvas)) continue;
        const IntBox b = blob_box(blob, p);
        bool clear = true;
        for (size_t j = 0; j < blobs.size() && clear; ++j) clear = boxes_separated(b, blob_box(blobs[j], places[j]));
        if (!clear) continue;
      }
      const int id = static_cast<int>(blobs.size());
      stamp(blob, p, canvas, id);
      blobs.push_back(std::move(blob));
      places.push_back(p);
      is_touching.push_back(partner >= 0);
      if (partner >= 0) {
        if (!is_touching[partner]) {
          is_touching[partner] = true;
          ++touching_count;
        }
        ++touching_count;
        pairs.emplace_back(partner, id);
      }
      placed = true;
    }
  }

  // Render.
  Image image(3, S, S);
  const double tint[3] = {1.0, uniform(rng, 0.8, 1.0), uniform(rng, 0.85, 1.0)};
  const double gx = uniform(rng, -0.04, 0.04), gy = uniform(rng, -0.04, 0.04);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> gray(size_t(S) * S);
  for (int r = 0; r < S; ++r)
    for (int c = 0; c < S; ++c)
      gray[size_t(r) * S + c] = 0.08 + gx * (c / double(S) - 0.5) + gy * (r / double(S) - 0.5) + 0.02 * noise(rng);
  for (size_t i = 0; i < blobs.size(); ++i) {
    const double base = uniform(rng, 0.55, 0.85);
    const auto& b = blobs[i];
    for (size_t k = 0; k < b.pixels.size(); ++k) {
      const int r = places[i].row + b.pixels[k].first, c = places[i].col + b.pixels[k].second;
      bool rim = false;
      for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= S || cc >= S || canvas.at(rr, cc) != int(i)) rim = true;
      }
      const double rad = b.radial[k];
      double v = base * (1.0 - 0.25 * rad * rad) + 0.04 * noise(rng);
      if (rim) v *= 0.85;
      gray[size_t(r) * S + c] = v;
    }
  }
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c)
        image.at(ch, r, c) = float(std::clamp(gray[size_t(r) * S + c] * tint[ch], 0.0, 1.0));

  std::vector<BinaryMask> masks;
  for (size_t i = 0; i < blobs.size(); ++i) {
    BinaryMask m(S, S);
    for (auto [dy, dx] : blobs[i].pixels) m.set(places[i].row + dy, places[i].col + dx);
    masks.push_back(std::move(m));
  }

  GeneratedScene out;
  out.scene = Scene::make("synth_" + std::to_string(cfg.seed) + "_" + std::to_string(index), std::move(image),
                          std::move(masks));
  out.touching_pairs = std::move(pairs);
  out.requested_instances = requested;
  out.packing_shortfall = int(out.scene.size()) < requested;
  if (out.packing_shortfall)
    spdlog::debug("synth scene {}: placed {} of {} instances", index, out.scene.size(), requested);
  return out;
}

// ---------------------------------------------------------------------------
// Image IO

Image read_image(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot read image", path.string());
  cv::Mat rgb;
  if (raw.channels() == 1) {
    cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
  } else if (raw.channels() == 4) {
    cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  }
  const double scale = rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  cv::Mat f;
  rgb.convertTo(f, CV_32FC3, scale);
  Image img(3, f.rows, f.cols);
  for (int r = 0; r < f.rows; ++r) {
    const auto* row = f.ptr<cv::Vec3f>(r);
    for (int c = 0; c < f.cols; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(ch, r, c) = row[c][ch];
  }
  return img;
}

void write_image(const fs::path& path, const Image& image) {
  cv::Mat out(image.height, image.width, CV_8UC3);
  for (int r = 0; r < image.height; ++r) {
    auto* row = out.ptr<cv::Vec3b>(r);
    for (int c = 0; c < image.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const int src = image.channels == 1 ? 0 : ch;
        const float v = std::clamp(image.at(src, r, c), 0.f, 1.f);
        row[c][2 - ch] = static_cast<uint8_t>(std::lround(v * 255.f));
      }
    }
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write image", path.string());
}

void write_mask(const fs::path& path, const BinaryMask& mask) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c) out.at<uint8_t>(r, c) = mask.at(r, c) ? 255 : 0;
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write mask", path.string());
}

void write_folder_dataset(const fs::path& root, const std::vector<Scene>& scenes) {
  for (const auto& s : scenes) {
    const fs::path dir = root / s.id;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    write_image(dir / "images" / (s.id + ".png"), s.image);
    for (size_t k = 0; k < s.instances.size(); ++k)
      write_mask(dir / "masks" / (std::to_string(k) + ".png"), s.instances[k]);
  }
}

// ---------------------------------------------------------------------------
// Folder dataset

FolderDataset::FolderDataset(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) throw IoError("dataset root is not a directory", root_.string());
  for (const auto& entry : fs::directory_iterator(root_))
    if (entry.is_directory()) ids_.push_back(entry.path().filename().string());
  std::sort(ids_.begin(), ids_.end());
  if (ids_.empty()) throw DatasetError(DatasetError::Kind::kEmpty, root_.string(), "dataset has no scenes");
}

Scene FolderDataset::load(size_t i) const {
  using Kind = DatasetError::Kind;
  const std::string& sid = ids_.at(i);
  const fs::path dir = root_ / sid;
  const fs::path image_path = dir / "images" / (sid + ".png");
  if (!fs::exists(image_path)) throw DatasetError(Kind::kMissingImage, sid, "missing " + image_path.string());
  const fs::path mask_dir = dir / "masks";
  if (!fs::is_directory(mask_dir)) throw DatasetError(Kind::kMissingMasks, sid, "missing masks directory");

  Image image;
  try {
    image = read_image(image_path);
  } catch (const IoError& e) {
    throw DatasetError(Kind::kUnreadable, sid, e.what());
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(mask_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<BinaryMask> masks;
  for (const auto& f : files) {
    cv::Mat m = cv::imread(f.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DatasetError(Kind::kUnreadable, sid, "cannot read mask " + f.string());
    if (m.rows != image.height || m.cols != image.width)
      throw DatasetError(Kind::kShapeMismatch, sid, "mask " + f.filename().string() + " differs in shape from image");
    BinaryMask bm(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
      for (int c = 0; c < m.cols; ++c)
        if (m.at<uint8_t>(r, c) > 127) bm.set(r, c);
    if (!bm.any()) {
      spdlog::warn("scene {}: mask {} is empty, dropped", sid, f.filename().string());
      continue;
    }
    masks.push_back(std::move(bm));
  }
  return Scene::make(sid, std::move(image), std::move(masks));
}

// ---------------------------------------------------------------------------
// Geometric transforms

namespace {

Image resize_image(const Image& src, int h, int w) {
  Image out(src.channels, h, w);
  for (int ch = 0; ch < src.channels; ++ch) {
    cv::Mat in(src.height, src.width, CV_32FC1, const_cast<float*>(&src.pixels[size_t(ch) * src.height * src.width]));
    cv::Mat dst(h, w, CV_32FC1, &out.pixels[size_t(ch) * h * w]);
    cv::resize(in, dst, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

BinaryMask resize_mask(const BinaryMask& src, int h, int w) {
  BinaryMask out(h, w);
  for (int r = 0; r < h; ++r) {
    const int sr = std::min(src.height() - 1, int((r + 0.5) * src.height() / h));
    for (int c = 0; c < w; ++c) {
      const int sc = std::min(src.width() - 1, int((c + 0.5) * src.width() / w));
      if (src.at(sr, sc)) out.set(r, c);
    }
  }
  return out;
}

Scene rebuild(const Scene& like, Image image, std::vector<BinaryMask> masks, std::vector<int> classes,
              int min_area) {
  std::vector<BinaryMask> kept;
  std::vector<int> kept_classes;
  for (size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].count() < min_area) continue;
    kept.push_back(std::move(masks[i]));
    kept_classes.push_back(classes[i]);
  }
  return Scene::make(like.id, std::move(image), std::move(kept), std::move(kept_classes));
}

}  // namespace

Scene letterbox(const Scene& scene, int height, int width, int min_instance_area) {
  const Image& src = scene.image;
  if (src.height == height && src.width == width) return scene;
  const double f = std::min(double(height) / src.height, double(width) / src.width);
  const int nh = std::max(1, std::min(height, int(std::lround(src.height * f))));
  const int nw = std::max(1, std::min(width, int(std::lround(src.width * f))));
  const Image scaled = (nh == src.height && nw == src.width) ? src : resize_image(src, nh, nw);
  Image out(src.channels, height, width);
  for (int ch = 0; ch < src.channels; ++ch)
    for (int r = 0; r < nh; ++r)
      for (int c = 0; c < nw; ++c) out.at(ch, r, c) = scaled.at(ch, r, c);
  std::vector<BinaryMask> masks;
  for (const auto& m : scene.instances) {
    const BinaryMask sm = (nh == src.height && nw == src.width) ? m : resize_mask(m, nh, nw);
    BinaryMask pm(height, width);
    for (int r = 0; r < nh; ++r)
      for (int c = 0; c < nw; ++c)
        if (sm.at(r, c)) pm.set(r, c);
    masks.push_back(std::move(pm));
  }
  return rebuild(scene, std::move(out), std::move(masks), scene.class_ids, min_instance_area);
}

Scene apply_augmentation(const Scene& scene, const AugmentParams& p, int out_height, int out_width,
                         int min_instance_area) {
  const Image& src = scene.image;
  const int cx = std::clamp(p.crop_x, 0, src.width - 1), cy = std::clamp(p.crop_y, 0, src.height - 1);
  const int cw = std::clamp(p.crop_width, 1, src.width - cx), chh = std::clamp(p.crop_height, 1, src.height - cy);

  Image crop(src.channels, chh, cw);
  for (int ch = 0; ch < src.channels; ++ch)
    for (int r = 0; r < chh; ++r)
      for (int c = 0; c < cw; ++c) crop.at(ch, r, c) = src.at(ch, cy + r, cx + c);
  std::vector<BinaryMask> masks;
  for (const auto& m : scene.instances) {
    BinaryMask cm(chh, cw);
    for (int r = 0; r < chh; ++r)
      for (int c = 0; c < cw; ++c)
        if (m.at(cy + r, cx + c)) cm.set(r, c);
    masks.push_back(std::move(cm));
  }
  Scene cropped = rebuild(scene, std::move(crop), std::move(masks), scene.class_ids, 1);
  const int oh = out_height > 0 ? out_height : src.height;
  const int ow = out_width > 0 ? out_width : src.width;
  Scene boxed = letterbox(cropped, oh, ow, 1);

  if (p.horizontal_flip || p.vertical_flip) {
    Image& im = boxed.image;
    Image flipped(im.channels, im.height, im.width);
    auto map_r = [&](int r) { return p.vertical_flip ? im.height - 1 - r : r; };
    auto map_c = [&](int c) { return p.horizontal_flip ? im.width - 1 - c : c; };
    for (int ch = 0; ch < im.channels; ++ch)
      for (int r = 0; r < im.height; ++r)
        for (int c = 0; c < im.width; ++c) flipped.at(ch, map_r(r), map_c(c)) = im.at(ch, r, c);
    std::vector<BinaryMask> fm;
    for (const auto& m : boxed.instances) {
      BinaryMask o(m.height(), m.width());
      for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c)
          if (m.at(r, c)) o.set(map_r(r), map_c(c));
      fm.push_back(std::move(o));
    }
    boxed = rebuild(boxed, std::move(flipped), std::move(fm), boxed.class_ids, 1);
  }
  std::vector<BinaryMask> final_masks = boxed.instances;
  return rebuild(boxed, boxed.image, std::move(final_masks), boxed.class_ids, min_instance_area);
}

AugmentParams sample_augmentation(const Scene& scene, const AugmentConfig& cfg, std::mt19937_64& rng) {
  AugmentParams p;
  const double s = cfg.max_crop_scale > cfg.min_crop_scale ? uniform(rng, cfg.min_crop_scale, cfg.max_crop_scale)
                                                           : cfg.max_crop_scale;
  p.crop_width = std::clamp(int(std::lround(scene.image.width * s)), 1, scene.image.width);
  p.crop_height = std::clamp(int(std::lround(scene.image.height * s)), 1, scene.image.height);
  p.crop_x = uniform_int(rng, 0, scene.image.width - p.crop_width);
  p.crop_y = uniform_int(rng, 0, scene.image.height - p.crop_height);
  p.horizontal_flip = cfg.horizontal_flip && uniform(rng, 0.0, 1.0) < 0.5;
  p.vertical_flip = cfg.vertical_flip && uniform(rng, 0.0, 1.0) < 0.5;
  return p;
}

Scene augment(const Scene& scene, std::mt19937_64& rng, const AugmentConfig& cfg) {
  return apply_augmentation(scene, sample_augmentation(scene, cfg, rng), cfg.out_height, cfg.out_width,
                            cfg.min_instance_area);
}

}  // namespace objseg
