#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "orgpose/numerics/parameters.hpp"

namespace orgpose::nn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one parameter.
struct AdamMoments {
  Tensor first;
  Tensor second;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam with L2 weight decay added to the gradient before the
/// moment update.
class Adam {
 public:
  /// Updates every trainable parameter of `store` from its accumulated grad.
  /// Throws NumericalError naming the parameter on a non-finite gradient;
  /// no parameter is modified in that case.
  void step(ParameterStore& store, const AdamOptions& options);

  /// Single-parameter update, exposed for tests and custom loops.
  static void update(Parameter& parameter, AdamMoments& moments, const AdamOptions& options);

  AdamMoments& moments(const std::string& name);
  const AdamMoments* find(const std::string& name) const;
  std::unordered_map<std::string, AdamMoments>& state() noexcept { return state_; }
  const std::unordered_map<std::string, AdamMoments>& state() const noexcept { return state_; }

 private:
  std::unordered_map<std::string, AdamMoments> state_;
};

}  // namespace orgpose::nn
