// objseg: train, evaluate and run the object-guided instance segmenter.
//
// Exit codes: 0 success, 1 user error (bad arguments, config, data), 2 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "objseg/config.hpp"
#include "objseg/data.hpp"
#include "objseg/errors.hpp"
#include "objseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace objseg;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kInternalError = 2;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::string variant;
  std::optional<uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "dotted override, e.g. train.epochs=5 (repeatable)");
    cmd->add_option("--variant", variant, "objBranch | sepBranchIN | objBranchIN");
    cmd->add_option("--seed", seed, "global seed (falls back to $OBJSEG_SEED)");
  }

  RunConfig resolve(const std::string& out_dir = {}) const {
    std::vector<std::string> all = sets;
    if (!variant.empty()) all.push_back("model.variant=\"" + variant + "\"");
    if (seed) all.push_back("seed=" + std::to_string(*seed));
    if (!out_dir.empty()) all.push_back("output_dir=" + nlohmann::json(out_dir).dump());
    return resolve_run_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), all);
  }
};

int cmd_train(const ConfigArgs& args, const std::string& out, bool overwrite) {
  const RunConfig cfg = args.resolve(out);
  const TrainResult r = run_train(cfg, overwrite);
  std::cout << "best epoch " << r.best_epoch << " of " << r.history.size() << ", val loss " << r.best_val
            << (r.early_stopped ? " (early stop)" : "") << "\ncheckpoint " << r.checkpoint.string() << '\n';
  return kOk;
}

int cmd_eval(const ConfigArgs& args, EvalOptions opt) {
  if (!args.file.empty()) opt.config_file = args.file;
  opt.overrides = args.sets;
  if (!args.variant.empty()) opt.overrides.push_back("model.variant=\"" + args.variant + "\"");
  if (args.seed) opt.overrides.push_back("seed=" + std::to_string(*args.seed));
  const Evaluation ev = run_eval(opt);
  std::cout << to_json(ev.report).dump(2) << '\n';
  if (ev.flags.ap_undefined) std::cout << "warning: no ground truth instances, AP undefined\n";
  if (ev.flags.aiou_50_empty || ev.flags.aiou_75_empty) std::cout << "note: AIoU flagged empty (no matches)\n";
  return kOk;
}

int cmd_infer(const InferOptions& opt) {
  const InferSummary s = run_infer(opt);
  std::cout << "processed " << s.processed << " image(s), " << s.failed << " failed\n";
  return s.processed == 0 ? kUserError : kOk;
}

int cmd_synth(const ConfigArgs& args, const std::string& out, int count, int start, bool overwrite) {
  const RunConfig cfg = args.resolve();
  const fs::path root = out;
  if (fs::exists(root) && !fs::is_empty(root) && !overwrite)
    throw ConfigError("output directory " + root.string() + " is not empty (use --overwrite)");
  std::vector<Scene> scenes;
  nlohmann::json meta = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    GeneratedScene g = generate_scene(cfg.data.synth, uint64_t(start + i));
    meta.push_back({{"id", g.scene.id},
                    {"touching_pairs", g.touching_pairs},
                    {"requested_instances", g.requested_instances},
                    {"packing_shortfall", g.packing_shortfall}});
    scenes.push_back(std::move(g.scene));
  }
  write_folder_dataset(root, scenes);
  std::ofstream(root / "synth_meta.json") << meta.dump(2) << '\n';
  std::ofstream(root / "config.resolved") << to_json(cfg).dump(2) << '\n';
  std::cout << "wrote " << count << " scene(s) to " << root.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-guided center-point instance segmentation"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  ConfigArgs train_args, eval_args, synth_args;
  std::string train_out;
  bool train_overwrite = false;
  auto* train = app.add_subcommand("train", "train a model");
  train_args.attach(train);
  train->add_option("-o,--out", train_out, "output directory (overrides output_dir)");
  train->add_flag("--overwrite", train_overwrite, "replace an existing run directory");

  EvalOptions eval_opt;
  std::string eval_ckpt, eval_data, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_args.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "folder dataset (default: synthetic test split)");
  eval->add_option("-o,--out", eval_out, "report directory")->required();
  eval->add_flag("--oracle", eval_opt.oracle, "score ground truth against itself");
  eval->add_flag("--overwrite", eval_opt.overwrite, "replace existing reports");
  eval->add_option("--warmup", eval_opt.warmup, "untimed warm-up passes")->check(CLI::NonNegativeNumber);

  InferOptions infer_opt;
  std::string infer_ckpt, infer_out;
  std::vector<std::string> infer_inputs;
  auto* infer = app.add_subcommand("infer", "segment images");
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer->add_option("inputs", infer_inputs, "image files or directories")->required();
  infer->add_option("-o,--out", infer_out, "archive directory")->required();
  infer->add_flag("--overlay", infer_opt.overlay, "also render coloured overlays");

  std::string synth_out;
  int synth_count = 0, synth_start = 0;
  bool synth_overwrite = false;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset to disk");
  synth_args.attach(synth);
  synth->add_option("-o,--out", synth_out, "dataset root")->required();
  synth->add_option("-n,--count", synth_count, "number of scenes")->required()->check(CLI::PositiveNumber);
  synth->add_option("--start", synth_start, "first scene index")->check(CLI::NonNegativeNumber);
  synth->add_flag("--overwrite", synth_overwrite, "write into a non-empty directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUserError;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  try {
    if (*train) return cmd_train(train_args, train_out, train_overwrite);
    if (*eval) {
      eval_opt.checkpoint = eval_ckpt;
      eval_opt.dataset = eval_data;
      eval_opt.out_dir = eval_out;
      return cmd_eval(eval_args, eval_opt);
    }
    if (*infer) {
      infer_opt.checkpoint = infer_ckpt;
      infer_opt.out_dir = infer_out;
      for (const auto& s : infer_inputs) infer_opt.inputs.emplace_back(s);
      return cmd_infer(infer_opt);
    }
    if (*synth) return cmd_synth(synth_args, synth_out, synth_count, synth_start, synth_overwrite);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const DatasetError& e) {
    std::cerr << "error: dataset: " << e.what() << '\n';
    return kUserError;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUserError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}
