#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgpose/model/gradcheck.hpp"
#include "orgpose/model/model.hpp"
#include "orgpose/model/train.hpp"
#include "orgpose/synth/synth.hpp"

namespace orgpose::cli {

/// One ablation setting: a patch over the run's model configuration and the
/// keep ratio applied when evaluating it.
struct AblationVariant {
  std::string group;
  std::string label;
  nlohmann::json model_patch = nlohmann::json::object();
  double keep_ratio = 1.0;
};

/// Rows for GNN layers 0-4, k 3/5, max/sum, dynamic/static and keep ratios
/// 0.2/0.6/0.8/1.0.
std::vector<AblationVariant> default_ablation_grid();

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<AblationVariant> variants = default_ablation_grid();
};

/// Everything a command can be configured with. A config file is a JSON
/// object with optional sections: seed, dataset, synth, model, train, eval,
/// gradcheck, ablation. Relative dataset paths resolve against the config
/// file's directory.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path dataset;
  synth::SynthConfig synth;
  model::ModelConfig model;
  /// Whether the file had a model section (eval checks it against the checkpoint).
  bool model_given = false;
  model::TrainConfig train;
  double keep_ratio = 1.0;
  std::string split = "test";
  model::GradcheckConfig gradcheck = model::default_gradcheck_config();
  AblationConfig ablation;

  /// Sets the seed everywhere it is used.
  void set_seed(std::uint64_t value);
  void validate() const;
};

/// Throws ConfigError for unknown sections and bad values.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
/// Throws MissingInputError if the file is absent, ConfigError if it is not JSON.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace orgpose::cli
