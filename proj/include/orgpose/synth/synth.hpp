#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "orgpose/dataio/dataset.hpp"
#include "orgpose/geometry/pose.hpp"
#include "orgpose/org/detection.hpp"

namespace orgpose::synth {

using geometry::Vec3;

struct CategorySpec {
  std::string name;
  bool is_static = true;
  Vec3 extent = Vec3::Ones();
  /// Height of the box bottom above the floor, sampled in [low, high].
  double elevation_low = 0.0;
  double elevation_high = 0.0;
};

/// Ten static indoor categories followed by two dynamic ones.
std::vector<CategorySpec> default_categories();

struct SceneConfig {
  std::vector<CategorySpec> categories = default_categories();
  std::size_t static_objects = 20;
  std::size_t dynamic_objects = 4;
  Vec3 bounds_min{-6.0, -6.0, 0.0};
  Vec3 bounds_max{6.0, 6.0, 3.0};
  /// Per-object extent scale drawn from [1 - jitter, 1 + jitter].
  double extent_jitter = 0.2;
  double dynamic_amplitude = 1.0;

  void validate() const;
};

struct SceneObject {
  Vec3 center = Vec3::Zero();
  Vec3 extent = Vec3::Ones();
  int category = 0;
  bool dynamic = false;
  double amplitude = 0.0;
  double angular_rate = 0.0;
  double phase = 0.0;

  /// Center at a given frame; static objects never move.
  Vec3 center_at(std::size_t frame) const;
};

struct Scene {
  std::vector<SceneObject> objects;
  std::vector<CategorySpec> categories;
  Vec3 bounds_min = Vec3::Zero();
  Vec3 bounds_max = Vec3::Zero();
  std::uint64_t seed = 0;

  Vec3 static_centroid() const;
  std::size_t static_count() const;
};

struct TrajectoryConfig {
  std::size_t frames = 2200;
  geometry::CameraIntrinsics intrinsics;
  /// Distance travelled per frame, also the hard bound on consecutive steps.
  double max_step = 0.08;
  /// AR(1) coefficient of the heading turn rate; closer to 1 is smoother.
  double smoothness = 0.95;
  double turn_std_deg = 4.0;
  /// The camera steers away from the scene centroid inside this radius.
  double min_radius = 2.5;
  double height_low = 1.2;
  double height_high = 1.8;
  /// Smoothed perturbation of the look-at orientation.
  double orientation_jitter_deg = 6.0;
  double noise_std_px = 1.0;
  double dropout = 0.05;
  double min_box_area_px = 16.0;
  double near_plane = 0.1;

  void validate() const;
};

Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

/// Smooth camera path inside the scene bounds, looking toward the static
/// centroid.
std::vector<geometry::Pose> sample_trajectory(const Scene& scene, const TrajectoryConfig& config, std::uint64_t seed);

/// Rotation whose camera axes (x right, y down, z forward) point along
/// `forward` with world z up, rolled by `roll` radians about forward.
geometry::Quat look_rotation(const Vec3& forward, double roll = 0.0);

/// Pinhole projection of every object's box corners into the camera at
/// `pose`; see the README for the visibility and noise model. `rng` drives
/// pixel noise and dropout.
std::vector<org::Detection> render_detections(const Scene& scene, const geometry::Pose& pose,
                                              const TrajectoryConfig& config, std::size_t frame,
                                              std::mt19937_64& rng);

struct SynthConfig {
  SceneConfig scene;
  TrajectoryConfig trajectory;
  /// Every `holdout_every`-th trajectory frame (offset holdout_every/2) goes to
  /// the test sequence; the rest to the train sequence. 0 disables the split.
  std::size_t holdout_every = 11;

  void validate() const;
};

nlohmann::json synth_config_to_json(const SynthConfig& config);
/// Missing keys keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Scene, trajectory and detections for every frame, packed as a dataset with
/// sequences "train" and "test".
data::Dataset generate_dataset(const SynthConfig& config, std::uint64_t seed);

}  // namespace orgpose::synth
