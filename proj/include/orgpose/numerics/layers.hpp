#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "orgpose/numerics/ops.hpp"
#include "orgpose/numerics/parameters.hpp"
#include "orgpose/numerics/tape.hpp"

namespace orgpose::nn {

using Rng = std::mt19937_64;

/// Independent child seed for stream `stream` of `seed` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class Mode { kTraining, kInference };

/// Per-pass switches shared by every layer in a forward pass.
struct ForwardContext {
  Mode mode = Mode::kInference;
  /// Off during finite-difference probes so repeated passes see identical state.
  bool update_running_stats = true;
  /// Dropout mask source; required in training mode when dropout is active.
  Rng* rng = nullptr;

  bool training() const noexcept { return mode == Mode::kTraining; }
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

class Linear {
 public:
  Linear() = default;
  /// Registers `<name>.weight` [in x out] and `<name>.bias` [out] (zeros).
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var operator()(Tape& tape, Var input) const;

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;

  bool operator==(const BatchNormOptions&) const = default;
};

/// Per-feature normalization over the rows of a batch. Training mode uses the
/// batch statistics (biased variance) and folds them into the running
/// estimates; inference mode, and training batches of a single row, use the
/// running estimates only.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t features, BatchNormOptions options = {});

  Var operator()(Tape& tape, Var input, const ForwardContext& ctx) const;

  std::size_t features() const noexcept { return features_; }
  const BatchNormOptions& options() const noexcept { return options_; }
  Parameter& scale() const { return *scale_; }
  Parameter& shift() const { return *shift_; }
  Parameter& running_mean() const { return *running_mean_; }
  Parameter& running_var() const { return *running_var_; }

 private:
  Var normalize_with_running(Tape& tape, Var input) const;

  Parameter* scale_ = nullptr;
  Parameter* shift_ = nullptr;
  Parameter* running_mean_ = nullptr;
  Parameter* running_var_ = nullptr;
  std::size_t features_ = 0;
  BatchNormOptions options_;
};

/// Inverted dropout: zeroes with probability `rate` and rescales survivors by
/// 1/(1-rate) in training mode; identity otherwise.
Var dropout(Tape& tape, Var input, double rate, const ForwardContext& ctx);

}  // namespace orgpose::nn
