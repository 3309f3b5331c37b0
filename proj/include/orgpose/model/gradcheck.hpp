#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgpose/model/model.hpp"

namespace orgpose::model {

struct GradcheckConfig {
  ModelConfig model;
  std::size_t objects = 5;
  std::size_t frames = 2;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Every module at a few units of width, so the finite-difference sweep over
/// all parameters stays quick.
ModelConfig tiny_model_config();
GradcheckConfig default_gradcheck_config();

nlohmann::json gradcheck_config_to_json(const GradcheckConfig& config);
/// `model` keys override tiny_model_config(); other keys keep their defaults.
GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j);

struct GroupResult {
  std::string group;
  std::size_t elements = 0;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| over the group divided by the largest gradient
  /// magnitude in the group (floored at 1e-8).
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GroupResult> groups;
  bool passed = false;
};

nlohmann::json gradcheck_report_to_json(const GradcheckReport& report);

/// Applied to the model output before the loss; lets tests splice in an op
/// with a deliberately wrong backward rule.
using OutputTransform = std::function<PoseOutput(nn::Tape&, const PoseOutput&)>;

/// Compares backpropagated gradients of the tuple loss (training mode, frames
/// forming one tuple) with central differences. The first pass records every
/// discrete choice and the perturbed passes replay it, so the network is
/// differentiated as one fixed smooth piece.
GradcheckReport gradient_check(const GradcheckConfig& config, const OutputTransform& transform = {});

}  // namespace orgpose::model
