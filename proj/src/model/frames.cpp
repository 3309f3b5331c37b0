#include "orgpose/model/frames.hpp"

#include "orgpose/error.hpp"
#include "orgpose/numerics/layers.hpp"

namespace orgpose::model {

std::vector<org::FrameInput> FrameSet::inputs(std::span<const std::size_t> indices) const {
  std::vector<org::FrameInput> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(input(i));
  return out;
}

std::vector<org::FrameInput> FrameSet::all_inputs() const {
  std::vector<org::FrameInput> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(input(i));
  return out;
}

FrameSet make_frame_set(const data::Dataset& dataset, const std::string& split, double keep_ratio,
                        std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("keep_ratio", "must lie in (0, 1]");
  FrameSet set;
  set.image = dataset.manifest.image_size();
  const auto allowed = dataset.manifest.static_categories();
  for (const auto& [name, frames] : dataset.split_sequences(split)) {
    for (const auto& f : frames) {
      set.frame_ids.push_back(f.frame_id);
      set.poses.push_back(f.pose());
      const auto frame_seed = nn::derive_seed(seed, static_cast<std::uint64_t>(f.frame_id));
      set.detections.push_back(org::filter_detections(f.detections, allowed, keep_ratio, frame_seed));
    }
    set.sequence_offsets.push_back(set.size());
  }
  return set;
}

std::vector<data::FrameTuple> frame_tuples(const FrameSet& frames, std::size_t tuple_size, std::size_t frame_gap) {
  std::vector<data::FrameTuple> out;
  for (std::size_t s = 0; s + 1 < frames.sequence_offsets.size(); ++s) {
    const std::size_t begin = frames.sequence_offsets[s];
    const std::size_t length = frames.sequence_offsets[s + 1] - begin;
    for (auto tuple : data::sample_tuples(length, tuple_size, frame_gap)) {
      for (auto& i : tuple.indices) i += begin;
      out.push_back(std::move(tuple));
    }
  }
  return out;
}

}  // namespace orgpose::model
