#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include <json.hpp>

#include "orgpose/model/frames.hpp"
#include "orgpose/model/model.hpp"
#include "orgpose/numerics/adam.hpp"

namespace orgpose::model {

struct TrainConfig {
  std::size_t epochs = 100;
  /// Frames per batch for the single-frame loss, tuples per batch for the
  /// tuple loss.
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  /// Multiplies the learning rate from epoch epochs/2 on.
  double lr_drop_factor = 0.1;
  std::size_t tuple_size = 3;
  std::size_t frame_gap = 10;
  /// Write a checkpoint every this many epochs; 0 writes only the final one.
  std::size_t checkpoint_every = 10;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Learning rate in effect during (0-based) `epoch`.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  /// Mean per-frame loss over the epoch's batches.
  double loss = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double learning_rate = 0.0;
};

nlohmann::json epoch_record_to_json(const EpochRecord& record);

/// Everything besides the parameters that a resumed run needs.
struct TrainerState {
  std::size_t epoch = 0;  // completed epochs
  nn::Adam adam;
};

struct TrainHooks {
  /// Where periodic, final and diagnostic checkpoints go; empty disables them.
  std::filesystem::path checkpoint_dir;
  /// Receives one JSON line per epoch.
  std::ostream* log = nullptr;
};

inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kDiagnosticFile = "diagnostic_checkpoint.json";

/// Runs epochs state.epoch .. config.epochs-1. Each epoch's shuffle and
/// dropout streams are derived from (seed, epoch), so a resumed run matches an
/// uninterrupted one. A non-finite loss or gradient writes a diagnostic
/// checkpoint and throws NumericalError.
std::vector<EpochRecord> train(PoseModel& model, TrainerState& state, const FrameSet& frames,
                               const TrainConfig& config, const TrainHooks& hooks = {});

void save_checkpoint(const std::filesystem::path& path, const PoseModel& model, const TrainerState& state,
                     const TrainConfig& config);

struct LoadedCheckpoint {
  std::unique_ptr<PoseModel> model;
  TrainerState state;
  TrainConfig train;
};

/// Rebuilds the model, optimizer state and training configuration. Throws
/// MissingInputError if the file is absent, ParseError if it is malformed and
/// CheckpointMismatchError if a stored tensor does not fit the stored model
/// configuration.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointMismatchError naming the first field where the model a
/// caller expects differs from the one stored in a checkpoint.
void require_compatible(const ModelConfig& expected, const ModelConfig& stored);

}  // namespace orgpose::model
