#include "objseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <type_traits>

#include <spdlog/spdlog.h>

#include "objseg/checkpoint.hpp"
#include "objseg/data.hpp"
#include "objseg/errors.hpp"

namespace objseg {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(const OptimizerConfig& cfg, nn::ParamList<float> params) : cfg_(cfg) {
  for (auto* p : params)
    if (p->trainable) params_.push_back(p);
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(cfg_.method == "adam" ? p->value.size() : 0, 0.0f);
  }
}

void Optimizer::step() {
  ++t_;
  const double lr = cfg_.learning_rate;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  const float wd = float(cfg_.weight_decay);
  for (size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    const size_t n = params_[k]->value.size();
    if (cfg_.method == "adam") {
      float* v = v_[k].data();
      const float b1 = float(cfg_.beta1), b2 = float(cfg_.beta2);
      const float step = float(lr / bc1), inv_bc2 = float(1.0 / bc2), eps = float(cfg_.epsilon);
      for (size_t i = 0; i < n; ++i) {
        const float gi = g[i] + wd * w[i];
        m[i] = b1 * m[i] + (1 - b1) * gi;
        v[i] = b2 * v[i] + (1 - b2) * gi * gi;
        w[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    } else {
      const float mu = float(cfg_.momentum), flr = float(lr);
      for (size_t i = 0; i < n; ++i) {
        m[i] = mu * m[i] + g[i] + wd * w[i];
        w[i] -= flr * m[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Data

std::vector<Scene> load_folder_scenes(const fs::path& root, int input_size) {
  FolderDataset ds(root);
  std::vector<Scene> out;
  out.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) out.push_back(letterbox(ds.load(i), input_size, input_size));
  return out;
}

DataSplits load_splits(const RunConfig& cfg, bool with_test) {
  DataSplits s;
  const auto& d = cfg.data;
  if (d.train_root.empty()) {
    const uint64_t n_train = uint64_t(d.synth_train), n_val = uint64_t(d.synth_val);
    for (uint64_t i = 0; i < n_train; ++i) s.train.push_back(generate_scene(d.synth, i).scene);
    for (uint64_t i = 0; i < n_val; ++i) s.val.push_back(generate_scene(d.synth, n_train + i).scene);
    if (with_test)
      for (uint64_t i = 0; i < uint64_t(d.synth_test); ++i) {
        GeneratedScene g = generate_scene(d.synth, n_train + n_val + i);
        s.test_touching.push_back(std::move(g.touching_pairs));
        s.test.push_back(std::move(g.scene));
      }
    return s;
  }
  s.train = load_folder_scenes(d.train_root, d.input_size);
  if (!d.val_root.empty()) {
    s.val = load_folder_scenes(d.val_root, d.input_size);
  } else if (d.val_fraction > 0 && s.train.size() > 1) {
    std::mt19937_64 rng = split_stream(cfg.seed, 0x76616cULL);
    std::shuffle(s.train.begin(), s.train.end(), rng);
    const size_t n_val = std::clamp<size_t>(size_t(std::lround(d.val_fraction * s.train.size())), 1,
                                            s.train.size() - 1);
    s.val.assign(std::make_move_iterator(s.train.end() - n_val), std::make_move_iterator(s.train.end()));
    s.train.erase(s.train.end() - n_val, s.train.end());
  }
  if (with_test && !d.test_root.empty()) s.test = load_folder_scenes(d.test_root, d.input_size);
  return s;
}

namespace {

std::mt19937_64 stream(uint64_t seed, uint64_t tag, uint64_t a, uint64_t b = 0) {
  std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(tag), uint32_t(a), uint32_t(a >> 32),
                    uint32_t(b), uint32_t(b >> 32)};
  return std::mt19937_64(seq);
}

Box jitter_box(const Box& b, double frac, std::mt19937_64& rng, int H, int W) {
  std::uniform_real_distribution<double> u(-frac, frac);
  const double w = b.width(), h = b.height();
  Box j{b.x1 + u(rng) * w, b.y1 + u(rng) * h, b.x2 + u(rng) * w, b.y2 + u(rng) * h};
  j = j.clamped(W, H);
  return (j.valid() && j.width() >= 1 && j.height() >= 1) ? j : b;
}

Grid grid_from(const nn::Tensor<float>& t, int n) {
  Grid g(t.c(), t.h(), t.w());
  const float* src = t.plane(n, 0);
  std::copy(src, src + t.sample_size(), g.values.begin());
  return g;
}

}  // namespace

TrainBatch make_batch(std::span<const Scene> scenes, const RunConfig& cfg, std::mt19937_64* rng) {
  if (scenes.empty()) throw InvalidInput("make_batch: no scenes");
  const int C = scenes[0].image.channels, H = scenes[0].image.height, W = scenes[0].image.width;
  TrainBatch b;
  b.images = nn::Tensor<float>(int(scenes.size()), C, H, W);
  const EncodingOptions enc{cfg.model.num_classes, cfg.min_overlap};
  for (size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    if (s.image.channels != C || s.image.height != H || s.image.width != W)
      throw InvalidInput("make_batch: scenes differ in shape");
    std::copy(s.image.pixels.begin(), s.image.pixels.end(), b.images.plane(int(i), 0));
    b.targets.push_back(encode_detection_targets(s, cfg.model.stride, enc));

    std::vector<size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (rng) std::shuffle(idx.begin(), idx.end(), *rng);
    if (idx.size() > size_t(cfg.train.max_rois_per_image)) idx.resize(size_t(cfg.train.max_rois_per_image));
    for (size_t k : idx) {
      Box box = s.boxes[k];
      if (rng && cfg.train.box_jitter > 0) box = jitter_box(box, cfg.train.box_jitter, *rng, H, W);
      b.rois.push_back({int(i), box});
      b.mask_targets.push_back(encode_roi_mask(s.instances[k], box, cfg.model.roi_grid));
    }
  }
  return b;
}

template <typename T>
LossBreakdown loss_step(ObjectGuidedNet<T>& net, const TrainBatch& batch, const RunConfig& cfg, bool training,
                        bool backward) {
  DetectionOutput<T> out;
  if constexpr (std::is_same_v<T, float>) {
    out = net.forward_detection(batch.images, training);
  } else {
    out = net.forward_detection(nn::from_double<T>(nn::to_double(batch.images)), training);
  }
  const int N = out.heatmap.n();

  const nn::Tensor<double> hm = nn::to_double(out.heatmap);
  std::vector<double> hm_target;
  hm_target.reserve(hm.size());
  for (const auto& t : batch.targets) hm_target.insert(hm_target.end(), t.heatmap.values.begin(), t.heatmap.values.end());
  nn::Tensor<double> g_hm = nn::Tensor<double>::zeros_like(hm);
  const double l_hm = focal_loss(hm.span(), hm_target, cfg.focal, backward ? g_hm.span() : std::span<double>{});

  // Keypoint L1 terms are means over every center of the batch.
  auto keypoint = [&](const nn::Tensor<T>& pred_f, const Grid DetectionTargets::*member, nn::Tensor<double>& grad) {
    const nn::Tensor<double> pred = nn::to_double(pred_f);
    grad = nn::Tensor<double>::zeros_like(pred);
    size_t total = 0;
    for (const auto& t : batch.targets) total += t.centers.size();
    if (total == 0) return 0.0;
    double loss = 0.0;
    const size_t per = pred.sample_size();
    for (int i = 0; i < N; ++i) {
      const auto& t = batch.targets[size_t(i)];
      if (t.centers.empty()) continue;
      std::span<const double> p(pred.data() + per * i, per);
      std::span<double> g = backward ? std::span<double>(grad.data() + per * i, per) : std::span<double>{};
      const double li = keypoint_l1_loss(p, (t.*member).values, t.center_mask, g);
      const double share = double(t.centers.size()) / double(total);
      loss += li * share;
      for (double& v : g) v *= share;
    }
    return loss;
  };
  nn::Tensor<double> g_off, g_wh;
  const double l_off = keypoint(out.offsets, &DetectionTargets::offsets, g_off);
  const double l_wh = keypoint(out.wh, &DetectionTargets::wh, g_wh);

  double l_mask = 0.0;
  nn::Tensor<double> g_mask;
  const bool has_rois = !batch.rois.empty() && cfg.loss.mask > 0;
  if (has_rois) {
    const nn::Tensor<double> mp = nn::to_double(net.forward_segmentation(batch.rois));
    g_mask = nn::Tensor<double>::zeros_like(mp);
    l_mask = mask_bce_loss(mp.span(), batch.mask_targets, backward ? g_mask.span() : std::span<double>{}).value;
  }
  const LossBreakdown lb = total_loss(l_hm, l_off, l_wh, l_mask, cfg.loss);

  if (backward) {
    auto scaled = [](nn::Tensor<double>& g, double w) {
      for (double& v : g.span()) v *= w;
      return nn::from_double<T>(g);
    };
    DetectionGrads<T> grads{scaled(g_hm, 1.0), scaled(g_off, cfg.loss.offset), scaled(g_wh, cfg.loss.wh)};
    if (has_rois) {
      const nn::Tensor<T> gm = scaled(g_mask, cfg.loss.mask);
      net.backward(grads, &gm);
    } else {
      net.backward(grads, nullptr);
    }
  }
  return lb;
}

template LossBreakdown loss_step<float>(ObjectGuidedNet<float>&, const TrainBatch&, const RunConfig&, bool, bool);
template LossBreakdown loss_step<double>(ObjectGuidedNet<double>&, const TrainBatch&, const RunConfig&, bool, bool);

// ---------------------------------------------------------------------------
// Training

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.heatmap_loss += w * x.heatmap_loss;
  acc.offset_loss += w * x.offset_loss;
  acc.wh_loss += w * x.wh_loss;
  acc.mask_loss += w * x.mask_loss;
  acc.total += w * x.total;
}

LossBreakdown mean_loss(Net& net, const std::vector<Scene>& scenes, const RunConfig& cfg) {
  LossBreakdown acc;
  const size_t bs = size_t(cfg.train.batch_size);
  for (size_t s = 0; s < scenes.size(); s += bs) {
    const size_t e = std::min(scenes.size(), s + bs);
    const TrainBatch b = make_batch(std::span(scenes).subspan(s, e - s), cfg, nullptr);
    accumulate(acc, loss_step(net, b, cfg, false, false), double(e - s) / double(scenes.size()));
  }
  return acc;
}

bool holds_run(const fs::path& dir) {
  for (const char* f : {"checkpoint.bin", "losses.csv", "metrics.json", "config.resolved"})
    if (fs::exists(dir / f)) return true;
  return false;
}

void prepare_out_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError("output path is not a directory: " + dir.string());
  if (!overwrite && fs::exists(dir) && holds_run(dir))
    throw ConfigError("output directory " + dir.string() + " already holds a run (use --overwrite)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory", dir.string());
}

}  // namespace

void write_resolved_config(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream out(dir / "config.resolved");
  if (!out) throw IoError("cannot write", (dir / "config.resolved").string());
  out << to_json(cfg).dump(2) << '\n';
}

TrainResult run_train(const RunConfig& cfg, bool overwrite) {
  cfg.validate();
  const fs::path dir = cfg.output_dir;
  prepare_out_dir(dir, overwrite);
  write_resolved_config(dir, cfg);

  DataSplits data = load_splits(cfg, false);
  if (data.train.empty()) throw DatasetError(DatasetError::Kind::kEmpty, "train", "training set is empty");
  spdlog::info("training on {} scenes, validating on {}", data.train.size(), data.val.size());

  Net net(cfg.model);
  if (!cfg.model.pretrained_encoder.empty()) {
    const size_t n = apply_checkpoint(load_checkpoint(cfg.model.pretrained_encoder), net.parameters(), "encoder.");
    spdlog::info("loaded {} encoder tensors from {}", n, cfg.model.pretrained_encoder);
  }
  Optimizer opt(cfg.optimizer, net.parameters());

  TrainResult res;
  res.checkpoint = dir / "checkpoint.bin";
  std::ofstream csv(dir / "losses.csv");
  if (!csv) throw IoError("cannot write", (dir / "losses.csv").string());
  csv << "epoch,train_total,train_heatmap,train_offset,train_wh,train_mask,"
         "val_total,val_heatmap,val_offset,val_wh,val_mask,seconds\n";
  csv.precision(10);

  AugmentConfig aug = cfg.train.augmentation;
  aug.out_height = aug.out_width = cfg.data.input_size;
  const size_t bs = size_t(cfg.train.batch_size);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const json cfg_json = to_json(cfg);

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng = stream(cfg.seed, 1, uint64_t(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (size_t s = 0; s < order.size(); s += bs) {
      const size_t e = std::min(order.size(), s + bs);
      std::vector<Scene> scenes;
      for (size_t k = s; k < e; ++k) {
        const size_t i = order[k];
        if (cfg.train.augment) {
          std::mt19937_64 r = stream(cfg.seed, 2, uint64_t(epoch), i);
          scenes.push_back(augment(data.train[i], r, aug));
        } else {
          scenes.push_back(data.train[i]);
        }
      }
      std::mt19937_64 jitter = stream(cfg.seed, 3, uint64_t(epoch), s);
      const TrainBatch b = make_batch(scenes, cfg, &jitter);
      net.zero_grad();
      const LossBreakdown lb = loss_step(net, b, cfg, true, true);
      if (!std::isfinite(lb.total)) throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      opt.step();
      accumulate(rec.train, lb, double(e - s) / double(order.size()));
    }
    rec.val = data.val.empty() ? rec.train : mean_loss(net, data.val, cfg);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rec);

    csv << epoch << ',' << rec.train.total << ',' << rec.train.heatmap_loss << ',' << rec.train.offset_loss << ','
        << rec.train.wh_loss << ',' << rec.train.mask_loss << ',' << rec.val.total << ',' << rec.val.heatmap_loss
        << ',' << rec.val.offset_loss << ',' << rec.val.wh_loss << ',' << rec.val.mask_loss << ',' << rec.seconds
        << '\n';
    csv.flush();
    spdlog::info("epoch {:3d}  train {:.5f} (hm {:.4f} off {:.4f} wh {:.4f} mask {:.4f})  val {:.5f}  {:.1f}s", epoch,
                 rec.train.total, rec.train.heatmap_loss, rec.train.offset_loss, rec.train.wh_loss,
                 rec.train.mask_loss, rec.val.total, rec.seconds);

    if (rec.val.total < best - cfg.train.min_delta) {
      best = rec.val.total;
      res.best_epoch = epoch;
      since_best = 0;
      save_checkpoint(res.checkpoint, cfg_json, net.parameters());
    } else if (++since_best >= cfg.train.patience) {
      res.early_stopped = true;
      spdlog::info("early stop: no validation improvement for {} epochs", since_best);
      break;
    }
  }
  res.best_val = best;
  return res;
}

std::unique_ptr<Net> load_model(const fs::path& checkpoint, RunConfig* run_config) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  RunConfig rc = run_config_from_json(ck.config);
  rc.model.pretrained_encoder.clear();
  auto net = std::make_unique<Net>(rc.model);
  apply_checkpoint(ck, net->parameters());
  if (run_config) *run_config = rc;
  return net;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<InstanceResult> predict(Net& net, const Image& image, const RunConfig& cfg) {
  const int S = cfg.data.input_size;
  const int H = image.height, W = image.width;
  if (H <= 0 || W <= 0) throw InvalidInput("predict: empty image");
  if (image.channels != cfg.model.input_channels) throw InvalidInput("predict: channel count mismatch");
  double fx = 1.0, fy = 1.0;
  const Image* input = &image;
  Image boxed;
  if (H != S || W != S) {
    boxed = letterbox(Scene::make("", image, {}), S, S).image;
    const double f = std::min(double(S) / H, double(S) / W);
    fy = double(std::max(1, std::min(S, int(std::lround(H * f))))) / H;
    fx = double(std::max(1, std::min(S, int(std::lround(W * f))))) / W;
    input = &boxed;
  }
  nn::Tensor<float> x(1, input->channels, S, S);
  std::copy(input->pixels.begin(), input->pixels.end(), x.data());
  const DetectionOutput<float> out = net.forward_detection(x, false);
  std::vector<Detection> dets = topk_decode(grid_from(out.heatmap, 0), grid_from(out.offsets, 0),
                                            grid_from(out.wh, 0), cfg.model.stride, S, S, cfg.decode);
  std::erase_if(dets, [](const Detection& d) { return !(d.box.width() > 0 && d.box.height() > 0); });
  if (dets.empty()) return {};

  std::vector<nn::RoiRef> rois;
  for (const auto& d : dets) rois.push_back({0, d.box});
  const nn::Tensor<double> grids = nn::to_double(net.forward_segmentation(rois));
  for (auto& d : dets) d.box = Box{d.box.x1 / fx, d.box.y1 / fy, d.box.x2 / fx, d.box.y2 / fy}.clamped(W, H);
  PasteResult pr = paste_masks(dets, grids.span(), cfg.model.roi_grid, H, W, cfg.mask_threshold);
  return std::move(pr.instances);
}

std::vector<InstanceResult> oracle_predictions(const Scene& scene) {
  std::vector<InstanceResult> out;
  for (size_t k = 0; k < scene.size(); ++k) {
    InstanceResult r;
    r.detection.box = scene.boxes[k];
    r.detection.score = 1.0;
    r.detection.class_id = scene.class_ids.empty() ? 0 : scene.class_ids[k];
    r.mask = scene.instances[k];
    out.push_back(std::move(r));
  }
  return out;
}

Evaluation evaluate_model(Net& net, const std::vector<Scene>& scenes, const RunConfig& cfg, int warmup) {
  if (scenes.empty()) throw InvalidInput("evaluate: empty dataset");
  for (int w = 0; w < warmup; ++w) predict(net, scenes[0].image, cfg);
  std::vector<std::vector<InstanceResult>> preds;
  std::vector<double> timings;
  for (const auto& s : scenes) {
    const auto t0 = std::chrono::steady_clock::now();
    preds.push_back(predict(net, s.image, cfg));
    timings.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return evaluate(preds, scenes, std::move(timings));
}

json to_json(const MetricReport& r) {
  return {{"ap_box", r.ap_box},       {"ap_mask", r.ap_mask}, {"ap_mask_50", r.ap_mask_50},
          {"ap_mask_75", r.ap_mask_75}, {"aiou_50", r.aiou_50}, {"aiou_75", r.aiou_75},
          {"fps", r.fps}};
}

json to_json(const MetricFlags& f) {
  return {{"ap_undefined", f.ap_undefined}, {"aiou_50_empty", f.aiou_50_empty},
          {"aiou_75_empty", f.aiou_75_empty}, {"images", f.images},
          {"predictions", f.predictions},   {"ground_truths", f.ground_truths}};
}

json matches_to_json(const std::vector<ImageMatches>& per_image) {
  auto one = [](const MatchResult& m) {
    json pairs = json::array();
    for (const auto& p : m.pairs) pairs.push_back({p.prediction, p.ground_truth, p.iou});
    return json{{"threshold", m.threshold},
                {"pairs", pairs},
                {"unmatched_predictions", m.unmatched_predictions},
                {"unmatched_ground_truths", m.unmatched_ground_truths}};
  };
  json out = json::array();
  for (const auto& im : per_image)
    out.push_back({{"id", im.id}, {"box_50", one(im.box_50)}, {"mask_50", one(im.mask_50)}, {"mask_75", one(im.mask_75)}});
  return out;
}

namespace {

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write", p.string());
  out << j.dump(2) << '\n';
}

}  // namespace

Evaluation run_eval(const EvalOptions& opt) {
  const Checkpoint ck = load_checkpoint(opt.checkpoint);
  json merged = ck.config;
  if (opt.config_file) {
    std::ifstream in(*opt.config_file);
    if (!in) throw ConfigError("cannot open config file " + opt.config_file->string());
    const json patch = json::parse(in, nullptr, false, true);
    if (patch.is_discarded() || !patch.is_object())
      throw ConfigError("config file " + opt.config_file->string() + " is not a JSON object");
    merged.merge_patch(patch);
  }
  for (const auto& o : opt.overrides) apply_override(merged, o);
  RunConfig rc = run_config_from_json(merged);
  const RunConfig stored = run_config_from_json(ck.config);
  ModelConfig a = rc.model, b = stored.model;
  a.pretrained_encoder = b.pretrained_encoder;
  a.init_seed = b.init_seed;
  if (!(a == b)) throw ConfigError("model config does not match the checkpoint " + opt.checkpoint.string());
  rc.model = stored.model;
  rc.model.pretrained_encoder.clear();
  Net net_obj(rc.model);
  apply_checkpoint(ck, net_obj.parameters());
  Net* net = &net_obj;
  prepare_out_dir(opt.out_dir, opt.overwrite);

  std::vector<Scene> scenes;
  if (!opt.dataset.empty()) {
    scenes = load_folder_scenes(opt.dataset, rc.data.input_size);
  } else if (!rc.data.test_root.empty()) {
    scenes = load_folder_scenes(rc.data.test_root, rc.data.input_size);
  } else if (rc.data.train_root.empty()) {
    scenes = load_splits(rc, true).test;
  }
  if (scenes.empty()) throw InvalidInput("evaluate: empty dataset");

  Evaluation ev;
  if (opt.oracle) {
    std::vector<std::vector<InstanceResult>> preds;
    for (const auto& s : scenes) preds.push_back(oracle_predictions(s));
    ev = evaluate(preds, scenes);
  } else {
    ev = evaluate_model(*net, scenes, rc, opt.warmup);
  }
  write_json(opt.out_dir / "metrics.json", to_json(ev.report));
  write_json(opt.out_dir / "metrics_flags.json", to_json(ev.flags));
  write_json(opt.out_dir / "matches.json", matches_to_json(ev.per_image));
  write_resolved_config(opt.out_dir, rc);
  return ev;
}

json to_json(const Rle& r) { return {{"height", r.height}, {"width", r.width}, {"counts", r.counts}}; }

Rle rle_from_json(const json& j) {
  try {
    return Rle{j.at("height").get<int>(), j.at("width").get<int>(), j.at("counts").get<std::vector<uint32_t>>()};
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed RLE: ") + e.what());
  }
}

json archive_to_json(const std::string& image_name, int height, int width, const std::vector<InstanceResult>& instances) {
  json items = json::array();
  for (const auto& r : instances) {
    const Box& b = r.detection.box;
    items.push_back({{"box", {b.x1, b.y1, b.x2, b.y2}},
                     {"score", r.detection.score},
                     {"class_id", r.detection.class_id},
                     {"center_cell", {r.detection.center_cell.row, r.detection.center_cell.col}},
                     {"mask", to_json(rle_encode(r.mask))}});
  }
  return {{"image", image_name}, {"height", height}, {"width", width}, {"instances", items}};
}

std::vector<InstanceResult> archive_from_json(const json& j) {
  std::vector<InstanceResult> out;
  try {
    for (const auto& it : j.at("instances")) {
      InstanceResult r;
      const auto b = it.at("box").get<std::vector<double>>();
      if (b.size() != 4) throw InvalidInput("archive box must have 4 coordinates");
      r.detection.box = {b[0], b[1], b[2], b[3]};
      r.detection.score = it.at("score").get<double>();
      r.detection.class_id = it.at("class_id").get<int>();
      const auto cc = it.at("center_cell").get<std::vector<int>>();
      if (cc.size() == 2) r.detection.center_cell = {cc[0], cc[1]};
      r.mask = rle_decode(rle_from_json(it.at("mask")));
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed archive: ") + e.what());
  }
  return out;
}

Image render_overlay(const Image& image, const std::vector<InstanceResult>& instances) {
  Image out = image;
  for (size_t k = 0; k < instances.size(); ++k) {
    // Golden-angle hue walk, full saturation.
    const double hue = std::fmod(double(k) * 137.508, 360.0) / 60.0;
    const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
    double rgb[3] = {0, 0, 0};
    switch (int(hue)) {
      case 0: rgb[0] = 1, rgb[1] = x; break;
      case 1: rgb[0] = x, rgb[1] = 1; break;
      case 2: rgb[1] = 1, rgb[2] = x; break;
      case 3: rgb[1] = x, rgb[2] = 1; break;
      case 4: rgb[0] = x, rgb[2] = 1; break;
      default: rgb[0] = 1, rgb[2] = x; break;
    }
    const BinaryMask& m = instances[k].mask;
    if (m.height() != image.height || m.width() != image.width) continue;
    for (int r = 0; r < image.height; ++r)
      for (int c = 0; c < image.width; ++c)
        if (m.at(r, c))
          for (int ch = 0; ch < std::min(3, image.channels); ++ch)
            out.at(ch, r, c) = float(0.5 * out.at(ch, r, c) + 0.5 * rgb[ch]);
  }
  return out;
}

InferSummary run_infer(const InferOptions& opt) {
  if (opt.inputs.empty()) throw InvalidInput("infer: no input images");
  RunConfig rc;
  std::unique_ptr<Net> net = load_model(opt.checkpoint, &rc);
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec) throw IoError("cannot create output directory", opt.out_dir.string());
  write_resolved_config(opt.out_dir, rc);

  std::vector<fs::path> files;
  for (const auto& in : opt.inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" ||
                                    ext == ".tiff" || ext == ".bmp"))
          found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }

  InferSummary sum;
  for (const auto& f : files) {
    Image img;
    try {
      img = read_image(f);
    } catch (const std::exception& e) {
      spdlog::warn("skipping {}: {}", f.string(), e.what());
      ++sum.failed;
      continue;
    }
    const auto instances = predict(*net, img, rc);
    const std::string stem = f.stem().string();
    write_json(opt.out_dir / (stem + ".json"), archive_to_json(f.filename().string(), img.height, img.width, instances));
    if (opt.overlay) write_image(opt.out_dir / (stem + "_overlay.png"), render_overlay(img, instances));
    ++sum.processed;
  }
  return sum;
}

}  // namespace objseg
