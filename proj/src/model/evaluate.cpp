#include "orgpose/model/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "orgpose/error.hpp"

namespace orgpose::model {

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double mean(std::vector<double> values) {
  if (values.empty()) throw ValidationError("mean of an empty sample");
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

nlohmann::json eval_metrics_to_json(const EvalMetrics& m) {
  return {{"frames", m.frames},
          {"median_translation_m", m.median_translation_m},
          {"mean_translation_m", m.mean_translation_m},
          {"median_rotation_deg", m.median_rotation_deg},
          {"mean_rotation_deg", m.mean_rotation_deg}};
}

EvalMetrics summarize(std::span<const geometry::Pose> predictions, std::span<const geometry::Pose> truths) {
  if (truths.empty()) throw ValidationError("evaluation set is empty");
  if (predictions.size() != truths.size()) throw ValidationError("prediction and ground-truth counts differ");
  std::vector<double> t_err;
  std::vector<double> r_err;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    t_err.push_back(geometry::translation_error(predictions[i].t, truths[i].t));
    r_err.push_back(geometry::rotation_error_deg(predictions[i].r, truths[i].r));
  }
  EvalMetrics m;
  m.frames = truths.size();
  m.median_translation_m = median(t_err);
  m.mean_translation_m = mean(t_err);
  m.median_rotation_deg = median(r_err);
  m.mean_rotation_deg = mean(std::move(r_err));
  return m;
}

EvalResult evaluate(const PoseModel& model, const FrameSet& frames) {
  if (frames.empty()) throw ValidationError("evaluation set is empty");
  const auto predictions = model.predict(frames.all_inputs());
  EvalResult result;
  result.metrics = summarize(predictions, frames.poses);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    result.trajectory.push_back({frames.frame_ids[i], frames.poses[i], predictions[i],
                                 geometry::translation_error(predictions[i].t, frames.poses[i].t),
                                 geometry::rotation_error_deg(predictions[i].r, frames.poses[i].r)});
  }
  return result;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const TrajectoryRecord> trajectory) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "frame_id,gt_tx,gt_ty,gt_tz,gt_rx,gt_ry,gt_rz,pred_tx,pred_ty,pred_tz,pred_rx,pred_ry,pred_rz,t_err_m,r_err_deg\n";
  out << std::setprecision(17);
  for (const auto& rec : trajectory) {
    out << rec.frame_id;
    for (const auto* v : {&rec.truth.t, &rec.truth.r, &rec.prediction.t, &rec.prediction.r}) {
      for (int c = 0; c < 3; ++c) out << ',' << (*v)[c];
    }
    out << ',' << rec.translation_error_m << ',' << rec.rotation_error_deg << '\n';
  }
  if (!out.flush()) throw Error("failed writing " + path.string());
}

}  // namespace orgpose::model
