#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orgpose/dataio/dataset.hpp"
#include "orgpose/geometry/pose.hpp"
#include "orgpose/org/org.hpp"

namespace orgpose::model {

/// One split of a dataset as model inputs: detections restricted to static
/// categories (optionally thinned to a keep ratio) and ground-truth poses.
/// Frames are grouped by sequence in file order.
struct FrameSet {
  std::vector<std::int64_t> frame_ids;
  std::vector<std::vector<org::Detection>> detections;
  std::vector<geometry::Pose> poses;
  /// Sequence boundaries into the frame list, starting at 0.
  std::vector<std::size_t> sequence_offsets{0};
  org::ImageSize image;

  std::size_t size() const noexcept { return poses.size(); }
  bool empty() const noexcept { return poses.empty(); }
  org::FrameInput input(std::size_t i) const { return {detections[i], image}; }
  std::vector<org::FrameInput> inputs(std::span<const std::size_t> indices) const;
  std::vector<org::FrameInput> all_inputs() const;
};

/// Per frame, the subsample seed is derived from `seed` and the frame id, so
/// a frame keeps the same detections regardless of what else is loaded.
FrameSet make_frame_set(const data::Dataset& dataset, const std::string& split, double keep_ratio = 1.0,
                        std::uint64_t seed = 0);

/// Frame tuples of every sequence, as indices into the set.
std::vector<data::FrameTuple> frame_tuples(const FrameSet& frames, std::size_t tuple_size, std::size_t frame_gap);

}  // namespace orgpose::model
