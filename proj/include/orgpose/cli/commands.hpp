#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "orgpose/cli/run_config.hpp"
#include "orgpose/dataio/dataset.hpp"
#include "orgpose/model/evaluate.hpp"

namespace orgpose::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitMissingInput = 3,
  kExitIncompatibleCheckpoint = 4,
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::string> split;
};

/// The config file (or defaults when none is given) with --seed applied.
RunConfig resolve_config(const CommandOptions& options);

// Each command reports progress on `out` and throws on failure; run_command
// maps exceptions to exit codes.
int cmd_synth(const CommandOptions& options, std::ostream& out);
int cmd_train(const CommandOptions& options, std::ostream& out);
int cmd_eval(const CommandOptions& options, std::ostream& out);
int cmd_gradcheck(const CommandOptions& options, std::ostream& out);
int cmd_ablate(const CommandOptions& options, std::ostream& out);

/// Runs a command, printing any error to `err` and returning its exit code.
int run_command(const std::function<int()>& command, std::ostream& err);
int exit_code_for(const std::exception& e);

struct AblationRow {
  std::string group;
  std::string label;
  std::uint64_t seed = 0;
  bool ok = false;
  model::EvalMetrics metrics;
  std::string message;
};

/// Trains each distinct model configuration of the grid once per seed and
/// evaluates every row on `split`. A failing variant becomes a failed row.
std::vector<AblationRow> run_ablation(const RunConfig& config, const data::Dataset& dataset,
                                      const std::filesystem::path& out_dir, std::ostream& log);

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace orgpose::cli
