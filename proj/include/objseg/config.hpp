#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "objseg/data.hpp"
#include "objseg/decode.hpp"
#include "objseg/losses.hpp"
#include "objseg/model.hpp"

namespace objseg {

struct OptimizerConfig {
  std::string method = "adam";  // "adam" or "sgd"
  double learning_rate = 1.25e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd only
  double weight_decay = 0.0;
};

struct TrainConfig {
  int epochs = 100;
  int patience = 10;
  double min_delta = 1e-4;
  int batch_size = 4;
  double box_jitter = 0.05;  // relative jitter of ground-truth RoIs
  int max_rois_per_image = 16;
  bool augment = true;
  AugmentConfig augmentation;
};

// Either folder roots or a synthetic source. Empty `train_root` selects the
// synthetic generator, whose scenes are indices [0, train) for training,
// then validation, then test.
struct DataConfig {
  std::string train_root;
  std::string val_root;
  std::string test_root;
  double val_fraction = 0.1;  // held out of train_root when val_root is empty
  int input_size = 128;       // letterbox target, multiple of 32
  SynthConfig synth;
  int synth_train = 200;
  int synth_val = 25;
  int synth_test = 50;
};

struct RunConfig {
  ModelConfig model;
  OptimizerConfig optimizer;
  TrainConfig train;
  DataConfig data;
  LossWeights loss;
  FocalConfig focal;
  DecodeOptions decode;
  double mask_threshold = 0.5;
  double min_overlap = 0.7;
  std::string output_dir = "runs/default";
  uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
// Strict: unknown keys and ill-typed values raise ConfigError. Missing keys keep defaults.
RunConfig run_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" to `j`. The value is parsed as JSON when possible,
// otherwise taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// File (optional) -> dotted overrides -> seed fallback from $OBJSEG_SEED when
// no seed was given. Sub-seeds (model.init_seed, data.synth.seed) default to
// the run seed unless set explicitly.
RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides);

}  // namespace objseg
