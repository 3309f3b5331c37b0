#include "orgpose/model/loss.hpp"

#include "orgpose/error.hpp"
#include "orgpose/numerics/ops.hpp"

namespace orgpose::model {

using nn::Tensor;
using nn::Var;

namespace {

Tensor rows_of(std::span<const geometry::Pose> poses, bool translation) {
  if (poses.empty()) throw DimensionError("no poses");
  Tensor out({poses.size(), 3});
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& v = translation ? poses[i].t : poses[i].r;
    for (int c = 0; c < 3; ++c) out(i, static_cast<std::size_t>(c)) = v[c];
  }
  return out;
}

// Sum of d over rows, given differences dt and dr.
Var distance_sum(Var dt, Var dr, Var beta, Var gamma) {
  const double n = static_cast<double>(dt.rows());
  Var t_term = nn::add(nn::mul(nn::exp(nn::scale(beta, -1.0)), nn::sum(nn::abs(dt))), nn::scale(beta, n));
  Var r_term = nn::add(nn::mul(nn::exp(nn::scale(gamma, -1.0)), nn::sum(nn::abs(dr))), nn::scale(gamma, n));
  return nn::add(t_term, r_term);
}

void check_batch(const PoseRows& prediction, std::span<const geometry::Pose> target) {
  if (target.empty()) throw DimensionError("loss: empty batch");
  if (prediction.t.rows() != target.size() || prediction.r.rows() != target.size() || prediction.t.cols() != 3 ||
      prediction.r.cols() != 3) {
    throw DimensionError("loss: prediction rows do not match " + std::to_string(target.size()) + " targets");
  }
}

}  // namespace

Tensor translation_rows(std::span<const geometry::Pose> poses) { return rows_of(poses, true); }
Tensor rotation_rows(std::span<const geometry::Pose> poses) { return rows_of(poses, false); }

Var loss_single(const PoseRows& prediction, std::span<const geometry::Pose> target, Var beta, Var gamma) {
  check_batch(prediction, target);
  nn::Tape& tape = *prediction.t.tape;
  Var dt = nn::sub(prediction.t, tape.constant(translation_rows(target)));
  Var dr = nn::sub(prediction.r, tape.constant(rotation_rows(target)));
  return distance_sum(dt, dr, beta, gamma);
}

std::vector<std::pair<std::size_t, std::size_t>> tuple_pairs(std::size_t rows, std::size_t tuple_size) {
  if (tuple_size < 2) throw ConfigError("tuple_size", "the relative loss needs at least 2 frames per tuple");
  if (rows % tuple_size != 0) {
    throw DimensionError(std::to_string(rows) + " rows do not split into tuples of " + std::to_string(tuple_size));
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t base = 0; base < rows; base += tuple_size) {
    for (std::size_t i = 0; i < tuple_size; ++i) {
      for (std::size_t j = 0; j < tuple_size; ++j) {
        if (i != j) pairs.emplace_back(base + i, base + j);
      }
    }
  }
  return pairs;
}

Var loss_frame(const PoseRows& prediction, std::span<const geometry::Pose> target, std::size_t tuple_size, Var beta,
               Var gamma) {
  check_batch(prediction, target);
  const auto pairs = tuple_pairs(target.size(), tuple_size);
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  std::vector<geometry::Pose> relative_target;
  for (const auto& [i, j] : pairs) {
    first.push_back(i);
    second.push_back(j);
    const auto v = geometry::relative_pose(target[i], target[j]);
    relative_target.push_back({v.dt, v.dr});
  }
  Var absolute = loss_single(prediction, target, beta, gamma);
  const PoseRows relative{nn::sub(nn::gather_rows(prediction.t, first), nn::gather_rows(prediction.t, second)),
                          nn::sub(nn::gather_rows(prediction.r, first), nn::gather_rows(prediction.r, second))};
  return nn::add(absolute, loss_single(relative, relative_target, beta, gamma));
}

double loss_single_value(std::span<const geometry::Pose> prediction, std::span<const geometry::Pose> target,
                         double beta, double gamma) {
  if (target.empty()) throw DimensionError("loss: empty batch");
  if (prediction.size() != target.size()) throw DimensionError("loss: prediction and target sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) total += geometry::pose_distance(prediction[i], target[i], beta, gamma);
  return total;
}

double loss_frame_value(std::span<const geometry::Pose> prediction, std::span<const geometry::Pose> target,
                        std::size_t tuple_size, double beta, double gamma) {
  double total = loss_single_value(prediction, target, beta, gamma);
  for (const auto& [i, j] : tuple_pairs(target.size(), tuple_size)) {
    total += geometry::pose_distance(geometry::relative_pose(prediction[i], prediction[j]),
                                     geometry::relative_pose(target[i], target[j]), beta, gamma);
  }
  return total;
}

}  // namespace orgpose::model
