#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "orgpose/geometry/pose.hpp"
#include "orgpose/numerics/tape.hpp"

namespace orgpose::model {

/// Stacked poses as [n x 3] translation and log-rotation rows.
struct PoseRows {
  nn::Var t;
  nn::Var r;
};

nn::Tensor translation_rows(std::span<const geometry::Pose> poses);
nn::Tensor rotation_rows(std::span<const geometry::Pose> poses);

/// Sum over rows of |t - t*|_1 e^-beta + beta + |r - r*|_1 e^-gamma + gamma.
/// Throws DimensionError on an empty batch or mismatched shapes.
nn::Var loss_single(const PoseRows& prediction, std::span<const geometry::Pose> target, nn::Var beta, nn::Var gamma);

/// Tuple loss: rows are grouped into consecutive tuples of `tuple_size`
/// frames. Adds, per tuple, the distance between predicted and true relative
/// poses over every ordered pair i != j. Throws ConfigError if tuple_size < 2.
nn::Var loss_frame(const PoseRows& prediction, std::span<const geometry::Pose> target, std::size_t tuple_size,
                   nn::Var beta, nn::Var gamma);

/// Plain-value counterparts of the two losses.
double loss_single_value(std::span<const geometry::Pose> prediction, std::span<const geometry::Pose> target,
                         double beta, double gamma);
double loss_frame_value(std::span<const geometry::Pose> prediction, std::span<const geometry::Pose> target,
                        std::size_t tuple_size, double beta, double gamma);

/// Ordered pairs (i, j), i != j, of every tuple, as row indices.
std::vector<std::pair<std::size_t, std::size_t>> tuple_pairs(std::size_t rows, std::size_t tuple_size);

}  // namespace orgpose::model
