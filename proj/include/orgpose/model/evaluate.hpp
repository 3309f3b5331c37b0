#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "orgpose/geometry/pose.hpp"
#include "orgpose/model/frames.hpp"
#include "orgpose/model/model.hpp"

namespace orgpose::model {

/// Median of a non-empty sample (mean of the two middle values for even sizes).
double median(std::vector<double> values);
/// Mean summed in sorted order, so the result does not depend on input order.
double mean(std::vector<double> values);

struct EvalMetrics {
  std::size_t frames = 0;
  double median_translation_m = 0.0;
  double mean_translation_m = 0.0;
  double median_rotation_deg = 0.0;
  double mean_rotation_deg = 0.0;
};

nlohmann::json eval_metrics_to_json(const EvalMetrics& metrics);

struct TrajectoryRecord {
  std::int64_t frame_id = 0;
  geometry::Pose truth;
  geometry::Pose prediction;
  double translation_error_m = 0.0;
  double rotation_error_deg = 0.0;
};

struct EvalResult {
  EvalMetrics metrics;
  std::vector<TrajectoryRecord> trajectory;
};

/// Throws ValidationError on an empty or mismatched input.
EvalMetrics summarize(std::span<const geometry::Pose> predictions, std::span<const geometry::Pose> truths);

/// Inference-mode evaluation over every frame of the set.
EvalResult evaluate(const PoseModel& model, const FrameSet& frames);

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRecord> trajectory);

}  // namespace orgpose::model
