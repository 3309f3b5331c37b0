#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgpose/geometry/pose.hpp"
#include "orgpose/org/detection.hpp"

namespace orgpose::data {

/// Ground truth and detections of one image. The rotation is kept as the
/// stored unit quaternion so a write/read round trip is exact; the log form
/// used by the model is derived on demand.
struct FrameRecord {
  std::int64_t frame_id = 0;
  std::string sequence;
  geometry::Vec3 t = geometry::Vec3::Zero();
  geometry::Quat q = geometry::Quat::Identity();
  std::vector<org::Detection> detections;

  geometry::Pose pose() const { return geometry::make_pose(t, q); }
  bool operator==(const FrameRecord& other) const;
};

struct Category {
  int id = 0;
  std::string name;
  bool is_static = true;

  bool operator==(const Category&) const = default;
};

struct DatasetManifest {
  std::vector<Category> categories;
  geometry::CameraIntrinsics intrinsics;
  std::map<std::string, std::vector<std::string>> splits;
  /// Free-form provenance (generator seed, scene parameters).
  nlohmann::json meta = nlohmann::json::object();

  int category_count() const;
  std::set<int> static_categories() const;
  const std::vector<std::string>& split(const std::string& name) const;
  org::ImageSize image_size() const;

  /// Category ids unique and dense from 0, intrinsics valid, splits disjoint.
  void validate() const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<FrameRecord> frames;

  /// Frames whose sequence belongs to `split`, in file order.
  std::vector<FrameRecord> split_frames(const std::string& split) const;
  /// Frames of each sequence in `split`, keyed by sequence id.
  std::map<std::string, std::vector<FrameRecord>> split_sequences(const std::string& split) const;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kFramesFile = "frames.jsonl";

nlohmann::json frame_to_json(const FrameRecord& frame);
/// Throws ParseError (with `line`) on missing or mistyped fields.
FrameRecord frame_from_json(const nlohmann::json& j, const std::string& path, std::size_t line);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::string& path);

/// Writes `<dir>/manifest.json` and `<dir>/frames.jsonl` (one frame per line).
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads and validates a dataset directory. Throws MissingInputError if the
/// files are absent, ParseError naming the offending line for malformed
/// records and ValidationError for unknown categories, non-unit
/// quaternions or non-increasing frame ids.
Dataset read_dataset(const std::filesystem::path& dir);

/// Indices into a sequence, spaced `frame_gap` apart.
struct FrameTuple {
  std::vector<std::size_t> indices;
};

/// Every tuple (a, a+gap, ..., a+(size-1)*gap) inside a sequence of
/// `sequence_length` frames, anchors advancing by one. Returns an empty list
/// (and logs a warning) when the sequence is too short.
std::vector<FrameTuple> sample_tuples(std::size_t sequence_length, std::size_t tuple_size, std::size_t frame_gap);

}  // namespace orgpose::data
