#include "orgpose/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "orgpose/error.hpp"
#include "orgpose/model/frames.hpp"
#include "orgpose/model/gradcheck.hpp"
#include "orgpose/model/train.hpp"
#include "orgpose/synth/synth.hpp"

namespace orgpose::cli {

using nlohmann::json;

RunConfig resolve_config(const CommandOptions& options) {
  RunConfig config = options.config ? load_run_config(*options.config) : RunConfig{};
  if (options.seed) config.set_seed(*options.seed);
  if (options.split) config.split = *options.split;
  return config;
}

namespace {

std::filesystem::path require_out(const CommandOptions& options) {
  if (!options.out) throw ConfigError("--out", "an output directory is required");
  std::filesystem::create_directories(*options.out);
  return *options.out;
}

data::Dataset load_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("dataset", "no dataset directory configured");
  return data::read_dataset(config.dataset);
}

void check_categories(const model::ModelConfig& model, const data::Dataset& dataset) {
  const int expected = dataset.manifest.category_count();
  if (model.org.category_count != expected) {
    throw ConfigError("model.org.category_count", "is " + std::to_string(model.org.category_count) +
                                                      " but the dataset defines " + std::to_string(expected));
  }
}

void print_metrics(std::ostream& out, const model::EvalMetrics& m) {
  out << std::fixed << std::setprecision(4) << "frames: " << m.frames << "\n"
      << "translation error (m): median " << m.median_translation_m << ", mean " << m.mean_translation_m << "\n"
      << "rotation error (deg): median " << m.median_rotation_deg << ", mean " << m.mean_rotation_deg << "\n";
  out.unsetf(std::ios::floatfield);
}

}  // namespace

int cmd_synth(const CommandOptions& options, std::ostream& out) {
  const auto config = resolve_config(options);
  const auto dir = require_out(options);
  out << "seed: " << config.seed << "\n";
  const auto dataset = synth::generate_dataset(config.synth, config.seed);
  data::write_dataset(dataset, dir);
  std::map<std::string, std::size_t> per_split;
  for (const auto& [split, sequences] : dataset.manifest.splits) per_split[split] = dataset.split_frames(split).size();
  out << "objects: " << config.synth.scene.static_objects << " static, " << config.synth.scene.dynamic_objects
      << " dynamic\n"
      << "frames: " << dataset.frames.size();
  for (const auto& [split, n] : per_split) out << ", " << split << " " << n;
  out << "\nwrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const CommandOptions& options, std::ostream& out) {
  const auto config = resolve_config(options);
  const auto dir = require_out(options);
  out << "seed: " << config.seed << "\n";
  const auto dataset = load_dataset(config);
  check_categories(config.model, dataset);
  const auto frames = model::make_frame_set(dataset, "train");

  std::unique_ptr<model::PoseModel> pose_model;
  model::TrainerState state;
  if (options.checkpoint) {
    auto loaded = model::load_checkpoint(*options.checkpoint);
    model::require_compatible(config.model, loaded.model->config());
    pose_model = std::move(loaded.model);
    state = std::move(loaded.state);
    out << "resuming after epoch " << state.epoch << "\n";
  } else {
    pose_model = std::make_unique<model::PoseModel>(config.model, config.seed);
  }
  out << "variant: " << model::to_string(config.model.variant) << ", " << frames.size() << " training frames, "
      << pose_model->parameters().trainable_element_count() << " parameters\n";

  const auto log_path = dir / "train_log.jsonl";
  std::ofstream log(log_path, options.checkpoint ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write " + log_path.string());
  const auto start = std::chrono::steady_clock::now();
  const auto records = model::train(*pose_model, state, frames, config.train, {dir, &log});
  if (records.empty()) model::save_checkpoint(dir / model::kCheckpointFile, *pose_model, state, config.train);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!records.empty()) {
    const auto& last = records.back();
    out << "epoch " << last.epoch << ": loss " << last.loss << ", beta " << last.beta << ", gamma " << last.gamma
        << "\n";
  }
  out << "trained " << records.size() << " epochs in " << std::fixed << std::setprecision(1) << seconds << " s\n";
  out.unsetf(std::ios::floatfield);
  out << "wrote " << (dir / model::kCheckpointFile).string() << " and " << log_path.string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommandOptions& options, std::ostream& out) {
  const auto config = resolve_config(options);
  if (!options.checkpoint) throw ConfigError("--checkpoint", "a checkpoint is required");
  const auto loaded = model::load_checkpoint(*options.checkpoint);
  if (config.model_given) model::require_compatible(config.model, loaded.model->config());
  out << "seed: " << config.seed << "\n";
  const auto dataset = load_dataset(config);
  try {
    check_categories(loaded.model->config(), dataset);
  } catch (const ConfigError& e) {
    throw CheckpointMismatchError(e.what());
  }
  const auto frames = model::make_frame_set(dataset, config.split, config.keep_ratio, config.seed);
  const auto result = model::evaluate(*loaded.model, frames);

  const auto dir = options.out ? require_out(options) : options.checkpoint->parent_path();
  const auto csv = dir / ("trajectory_" + config.split + ".csv");
  model::write_trajectory_csv(csv, result.trajectory);
  auto metrics = model::eval_metrics_to_json(result.metrics);
  metrics["split"] = config.split;
  metrics["keep_ratio"] = config.keep_ratio;
  std::ofstream(dir / ("metrics_" + config.split + ".json")) << metrics.dump(2) << "\n";

  out << "split: " << config.split << ", keep ratio " << config.keep_ratio << "\n";
  print_metrics(out, result.metrics);
  out << "wrote " << csv.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(const CommandOptions& options, std::ostream& out) {
  const auto config = resolve_config(options);
  out << "seed: " << config.gradcheck.seed << "\n";
  const auto start = std::chrono::steady_clock::now();
  const auto report = model::gradient_check(config.gradcheck);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::size_t width = 5;
  for (const auto& g : report.groups) width = std::max(width, g.group.size());
  out << std::left << std::setw(static_cast<int>(width)) << "group" << "  " << std::right << std::setw(8)
      << "elements" << "  " << std::setw(12) << "max rel err" << "  result\n";
  for (const auto& g : report.groups) {
    out << std::left << std::setw(static_cast<int>(width)) << g.group << "  " << std::right << std::setw(8)
        << g.elements << "  " << std::setw(12) << std::scientific << std::setprecision(3) << g.max_relative_error
        << "  " << (g.passed ? "PASS" : "FAIL") << "\n";
    out.unsetf(std::ios::floatfield);
  }
  out << (report.passed ? "PASS" : "FAIL") << ": tolerance " << config.gradcheck.tolerance << ", " << std::fixed
      << std::setprecision(2) << seconds << " s\n";
  out.unsetf(std::ios::floatfield);
  return report.passed ? kExitOk : kExitFailure;
}

int cmd_ablate(const CommandOptions& options, std::ostream& out) {
  const auto config = resolve_config(options);
  const auto dir = require_out(options);
  out << "seed: " << config.seed << " (variants use seeds";
  for (auto s : config.ablation.seeds) out << " " << s;
  out << ")\n";
  const auto dataset = load_dataset(config);
  const auto rows = run_ablation(config, dataset, dir, out);
  write_ablation_csv(dir / "ablation.csv", rows);
  const auto table = ablation_table(rows);
  std::ofstream(dir / "ablation.txt") << table;
  out << table;
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  out << rows.size() << " rows, " << failed << " failed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const MissingInputError*>(&e)) return kExitMissingInput;
  if (dynamic_cast<const CheckpointMismatchError*>(&e)) return kExitIncompatibleCheckpoint;
  return kExitFailure;
}

int run_command(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace orgpose::cli
