#include "objseg/config.hpp"

#include <cstdlib>
#include <fstream>

#include "objseg/errors.hpp"

namespace objseg {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

// Every key of `given` must exist in `defaults`; recurse into objects.
void check_keys(const json& given, const json& defaults, const std::string& prefix) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    const json& d = defaults.at(it.key());
    if (d.is_object()) {
      if (!it.value().is_object()) throw ConfigError("config key '" + path + "' must be an object");
      check_keys(it.value(), d, path);
    }
  }
}

json to_json(const AugmentConfig& a) {
  return {{"out_height", a.out_height},         {"out_width", a.out_width},
          {"min_crop_scale", a.min_crop_scale}, {"max_crop_scale", a.max_crop_scale},
          {"horizontal_flip", a.horizontal_flip}, {"vertical_flip", a.vertical_flip},
          {"min_instance_area", a.min_instance_area}};
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  read(j, "out_height", a.out_height);
  read(j, "out_width", a.out_width);
  read(j, "min_crop_scale", a.min_crop_scale);
  read(j, "max_crop_scale", a.max_crop_scale);
  read(j, "horizontal_flip", a.horizontal_flip);
  read(j, "vertical_flip", a.vertical_flip);
  read(j, "min_instance_area", a.min_instance_area);
  return a;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"encoder_widths", c.encoder_widths},
          {"blocks_per_stage", c.blocks_per_stage},
          {"decoder_widths", c.decoder_widths},
          {"head_width", c.head_width},
          {"seg_width", c.seg_width},
          {"stride", c.stride},
          {"num_classes", c.num_classes},
          {"roi_grid", c.roi_grid},
          {"variant", std::string(variant_name(c.variant))},
          {"input_channels", c.input_channels},
          {"norm_epsilon", c.norm_epsilon},
          {"wh_scale", c.wh_scale},
          {"init_seed", c.init_seed},
          {"pretrained_encoder", c.pretrained_encoder}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  check_keys(j, to_json(c), "model");
  read(j, "encoder_widths", c.encoder_widths);
  read(j, "blocks_per_stage", c.blocks_per_stage);
  read(j, "decoder_widths", c.decoder_widths);
  read(j, "head_width", c.head_width);
  read(j, "seg_width", c.seg_width);
  read(j, "stride", c.stride);
  // A stride-2 head needs one more decoder level; widen the default list.
  if (c.stride == 2 && !j.contains("decoder_widths")) c.decoder_widths = {64, 32, 32, 32};
  read(j, "num_classes", c.num_classes);
  read(j, "roi_grid", c.roi_grid);
  if (j.contains("variant")) {
    try {
      c.variant = parse_variant(j.at("variant").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model.variant: ") + e.what());
    }
  }
  read(j, "input_channels", c.input_channels);
  read(j, "norm_epsilon", c.norm_epsilon);
  read(j, "wh_scale", c.wh_scale);
  read(j, "init_seed", c.init_seed);
  read(j, "pretrained_encoder", c.pretrained_encoder);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const SynthConfig& c) {
  return {{"image_size", c.image_size},
          {"min_instances", c.min_instances},
          {"max_instances", c.max_instances},
          {"min_axis", c.min_axis},
          {"max_axis", c.max_axis},
          {"min_protrusions", c.min_protrusions},
          {"max_protrusions", c.max_protrusions},
          {"min_protrusion_length", c.min_protrusion_length},
          {"max_protrusion_length", c.max_protrusion_length},
          {"touching_fraction", c.touching_fraction},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  check_keys(j, to_json(c), "synth");
  read(j, "image_size", c.image_size);
  read(j, "min_instances", c.min_instances);
  read(j, "max_instances", c.max_instances);
  read(j, "min_axis", c.min_axis);
  read(j, "max_axis", c.max_axis);
  read(j, "min_protrusions", c.min_protrusions);
  read(j, "max_protrusions", c.max_protrusions);
  read(j, "min_protrusion_length", c.min_protrusion_length);
  read(j, "max_protrusion_length", c.max_protrusion_length);
  read(j, "touching_fraction", c.touching_fraction);
  read(j, "seed", c.seed);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json to_json(const RunConfig& c) {
  const auto& o = c.optimizer;
  const auto& t = c.train;
  const auto& d = c.data;
  return {{"model", to_json(c.model)},
          {"optimizer",
           {{"method", o.method},
            {"learning_rate", o.learning_rate},
            {"beta1", o.beta1},
            {"beta2", o.beta2},
            {"epsilon", o.epsilon},
            {"momentum", o.momentum},
            {"weight_decay", o.weight_decay}}},
          {"train",
           {{"epochs", t.epochs},
            {"patience", t.patience},
            {"min_delta", t.min_delta},
            {"batch_size", t.batch_size},
            {"box_jitter", t.box_jitter},
            {"max_rois_per_image", t.max_rois_per_image},
            {"augment", t.augment},
            {"augmentation", to_json(t.augmentation)}}},
          {"data",
           {{"train_root", d.train_root},
            {"val_root", d.val_root},
            {"test_root", d.test_root},
            {"val_fraction", d.val_fraction},
            {"input_size", d.input_size},
            {"synth", to_json(d.synth)},
            {"synth_train", d.synth_train},
            {"synth_val", d.synth_val},
            {"synth_test", d.synth_test}}},
          {"loss", {{"offset", c.loss.offset}, {"wh", c.loss.wh}, {"mask", c.loss.mask}}},
          {"focal", {{"alpha", c.focal.alpha}, {"beta", c.focal.beta}}},
          {"decode",
           {{"max_detections", c.decode.max_detections}, {"score_threshold", c.decode.score_threshold}}},
          {"mask_threshold", c.mask_threshold},
          {"min_overlap", c.min_overlap},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json defaults = to_json(c);
  // Model and synth subtrees are checked by their own readers.
  defaults["model"] = json::object();
  defaults["data"]["synth"] = json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
    if (defaults.at(it.key()).is_object() && !it.value().is_object())
      throw ConfigError("config key '" + it.key() + "' must be an object");
  }
  for (const char* section : {"optimizer", "train", "loss", "focal", "decode"})
    if (j.contains(section)) check_keys(j.at(section), defaults.at(section), section);
  if (j.contains("data")) {
    json dd = defaults.at("data");
    json given = j.at("data");
    given.erase("synth");
    check_keys(given, dd, "data");
  }
  if (j.contains("train") && j.at("train").contains("augmentation"))
    check_keys(j.at("train").at("augmentation"), to_json(AugmentConfig{}), "train.augmentation");

  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));

  const json empty = json::object();
  const json& o = j.contains("optimizer") ? j.at("optimizer") : empty;
  read(o, "method", c.optimizer.method);
  read(o, "learning_rate", c.optimizer.learning_rate);
  read(o, "beta1", c.optimizer.beta1);
  read(o, "beta2", c.optimizer.beta2);
  read(o, "epsilon", c.optimizer.epsilon);
  read(o, "momentum", c.optimizer.momentum);
  read(o, "weight_decay", c.optimizer.weight_decay);

  const json& t = j.contains("train") ? j.at("train") : empty;
  read(t, "epochs", c.train.epochs);
  read(t, "patience", c.train.patience);
  read(t, "min_delta", c.train.min_delta);
  read(t, "batch_size", c.train.batch_size);
  read(t, "box_jitter", c.train.box_jitter);
  read(t, "max_rois_per_image", c.train.max_rois_per_image);
  read(t, "augment", c.train.augment);
  if (t.contains("augmentation")) c.train.augmentation = augment_from_json(t.at("augmentation"));

  const json& d = j.contains("data") ? j.at("data") : empty;
  read(d, "train_root", c.data.train_root);
  read(d, "val_root", c.data.val_root);
  read(d, "test_root", c.data.test_root);
  read(d, "val_fraction", c.data.val_fraction);
  read(d, "input_size", c.data.input_size);
  if (d.contains("synth")) c.data.synth = synth_config_from_json(d.at("synth"));
  read(d, "synth_train", c.data.synth_train);
  read(d, "synth_val", c.data.synth_val);
  read(d, "synth_test", c.data.synth_test);

  const json& l = j.contains("loss") ? j.at("loss") : empty;
  read(l, "offset", c.loss.offset);
  read(l, "wh", c.loss.wh);
  read(l, "mask", c.loss.mask);
  const json& f = j.contains("focal") ? j.at("focal") : empty;
  read(f, "alpha", c.focal.alpha);
  read(f, "beta", c.focal.beta);
  const json& dec = j.contains("decode") ? j.at("decode") : empty;
  read(dec, "max_detections", c.decode.max_detections);
  read(dec, "score_threshold", c.decode.score_threshold);

  read(j, "mask_threshold", c.mask_threshold);
  read(j, "min_overlap", c.min_overlap);
  read(j, "output_dir", c.output_dir);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  try {
    model.validate();
    data.synth.validate();
  } catch (const InvalidInput& e) {
    fail(e.what());
  }
  if (optimizer.method != "adam" && optimizer.method != "sgd") fail("optimizer.method must be adam or sgd");
  if (!(optimizer.learning_rate > 0)) fail("optimizer.learning_rate must be positive");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1))
    fail("optimizer betas must lie in [0, 1)");
  if (!(optimizer.epsilon > 0)) fail("optimizer.epsilon must be positive");
  if (train.epochs < 1) fail("train.epochs must be >= 1");
  if (train.patience < 1) fail("train.patience must be >= 1");
  if (train.min_delta < 0) fail("train.min_delta must be >= 0");
  if (train.batch_size < 1) fail("train.batch_size must be >= 1");
  if (train.box_jitter < 0 || train.box_jitter >= 0.5) fail("train.box_jitter must lie in [0, 0.5)");
  if (train.max_rois_per_image < 1) fail("train.max_rois_per_image must be >= 1");
  if (!(train.augmentation.min_crop_scale > 0 && train.augmentation.min_crop_scale <= train.augmentation.max_crop_scale &&
        train.augmentation.max_crop_scale <= 1))
    fail("train.augmentation crop scales must satisfy 0 < min <= max <= 1");
  if (data.input_size < 32 || data.input_size % 32 != 0) fail("data.input_size must be a positive multiple of 32");
  if (data.val_fraction < 0 || data.val_fraction >= 1) fail("data.val_fraction must lie in [0, 1)");
  if (data.train_root.empty() && data.synth.image_size != data.input_size)
    fail("data.synth.image_size must equal data.input_size");
  if (data.synth_train < 1 || data.synth_val < 0 || data.synth_test < 0) fail("synthetic split sizes invalid");
  if (loss.offset < 0 || loss.wh < 0 || loss.mask < 0) fail("loss weights must be >= 0");
  if (focal.alpha < 0 || focal.beta < 0) fail("focal exponents must be >= 0");
  if (decode.max_detections < 1) fail("decode.max_detections must be >= 1");
  if (decode.score_threshold < 0 || decode.score_threshold > 1) fail("decode.score_threshold must lie in [0, 1]");
  if (mask_threshold <= 0 || mask_threshold >= 1) fail("mask_threshold must lie in (0, 1)");
  if (min_overlap <= 0 || min_overlap >= 1) fail("min_overlap must lie in (0, 1)");
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  std::string pointer;
  size_t start = 0;
  while (start <= key.size()) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  try {
    j[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
}

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    j = json::parse(in, nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
    if (!j.is_object()) throw ConfigError("config file must contain a JSON object");
  }
  for (const auto& o : overrides) apply_override(j, o);
  if (!j.contains("seed")) {
    if (const char* env = std::getenv("OBJSEG_SEED"); env && *env) {
      try {
        size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        j["seed"] = uint64_t(v);
      } catch (const std::exception&) {
        throw ConfigError(std::string("OBJSEG_SEED is not an unsigned integer: ") + env);
      }
    }
  }
  const uint64_t seed = j.contains("seed") && j["seed"].is_number_unsigned() ? j["seed"].get<uint64_t>() : 0;
  if (!j.contains("model") || !j["model"].contains("init_seed")) j["model"]["init_seed"] = seed;
  if (!j.contains("data") || !j["data"].contains("synth") || !j["data"]["synth"].contains("seed"))
    j["data"]["synth"]["seed"] = seed;
  return run_config_from_json(j);
}

}  // namespace objseg
