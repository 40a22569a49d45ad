#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "objseg/config.hpp"
#include "objseg/decode.hpp"
#include "objseg/encoding.hpp"
#include "objseg/losses.hpp"
#include "objseg/metrics.hpp"
#include "objseg/model.hpp"
#include "objseg/rle.hpp"
#include "objseg/scene.hpp"

namespace objseg {

using Net = ObjectGuidedNet<float>;

// Adam or momentum SGD over trainable parameters; state keyed by position.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, nn::ParamList<float> params);
  void step();
  long steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  nn::ParamList<float> params_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

struct DataSplits {
  std::vector<Scene> train, val, test;
  // Synthetic sources only: contact pairs per test scene.
  std::vector<std::vector<std::pair<int, int>>> test_touching;
};

// Synthetic or folder scenes, letterboxed to data.input_size.
DataSplits load_splits(const RunConfig& cfg, bool with_test);
std::vector<Scene> load_folder_scenes(const std::filesystem::path& root, int input_size);

struct TrainBatch {
  nn::Tensor<float> images;
  std::vector<DetectionTargets> targets;
  std::vector<nn::RoiRef> rois;
  std::vector<RoIMaskTarget> mask_targets;
};

// RoIs are ground-truth boxes; `jitter_rng` (may be null) perturbs each
// coordinate by up to train.box_jitter of the box size and subsamples to
// train.max_rois_per_image.
TrainBatch make_batch(std::span<const Scene> scenes, const RunConfig& cfg, std::mt19937_64* jitter_rng);

// Forward pass and loss; with `backward` the parameter gradients are accumulated.
template <typename T>
LossBreakdown loss_step(ObjectGuidedNet<T>& net, const TrainBatch& batch, const RunConfig& cfg, bool training, bool backward);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;
  LossBreakdown val;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = 0;
  bool early_stopped = false;
  std::filesystem::path checkpoint;
};

// Writes checkpoint.bin (best validation loss), losses.csv and
// config.resolved into cfg.output_dir. Throws ConfigError if the directory
// already holds a run and `overwrite` is false.
TrainResult run_train(const RunConfig& cfg, bool overwrite);

std::unique_ptr<Net> load_model(const std::filesystem::path& checkpoint, RunConfig* run_config = nullptr);

// Full-resolution instances for an image of any size: letterboxed to the
// network input, decoded, and mapped back to the source frame.
std::vector<InstanceResult> predict(Net& net, const Image& image, const RunConfig& cfg);

// Ground truth restated as predictions with score 1.
std::vector<InstanceResult> oracle_predictions(const Scene& scene);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;  // empty: synthetic test split of the checkpoint config
  std::filesystem::path out_dir;
  bool oracle = false;
  bool overwrite = false;
  int warmup = 2;
  // Applied on top of the checkpoint's resolved config. Changing any model
  // field is a config/checkpoint mismatch.
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;
};

Evaluation run_eval(const EvalOptions& options);

// Evaluates an in-memory model on scenes with FPS timing.
Evaluation evaluate_model(Net& net, const std::vector<Scene>& scenes, const RunConfig& cfg, int warmup = 2);

nlohmann::json to_json(const MetricReport& r);
nlohmann::json to_json(const MetricFlags& f);
nlohmann::json matches_to_json(const std::vector<ImageMatches>& per_image);

nlohmann::json to_json(const Rle& r);
Rle rle_from_json(const nlohmann::json& j);
// Per-image archive: {"image", "height", "width", "instances": [{box, score, class_id, mask}]}.
nlohmann::json archive_to_json(const std::string& image_name, int height, int width,
                               const std::vector<InstanceResult>& instances);
std::vector<InstanceResult> archive_from_json(const nlohmann::json& j);

struct InferOptions {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> inputs;  // image files or directories
  std::filesystem::path out_dir;
  bool overlay = false;
};

struct InferSummary {
  size_t processed = 0;
  size_t failed = 0;
};

InferSummary run_infer(const InferOptions& options);

// Instances blended over the image in distinct colours.
Image render_overlay(const Image& image, const std::vector<InstanceResult>& instances);

void write_resolved_config(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace objseg
