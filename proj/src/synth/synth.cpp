#include "orgpose/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "orgpose/error.hpp"
#include "orgpose/numerics/layers.hpp"

namespace orgpose::synth {

using geometry::Pose;
using geometry::Quat;
using nlohmann::json;
using nn::derive_seed;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

std::vector<CategorySpec> default_categories() {
  return {
      {"table", true, {1.2, 0.8, 0.75}, 0.0, 0.0},     {"chair", true, {0.5, 0.5, 0.9}, 0.0, 0.0},
      {"sofa", true, {2.0, 0.9, 0.8}, 0.0, 0.0},       {"tv", true, {1.0, 0.1, 0.6}, 0.6, 1.2},
      {"cabinet", true, {0.8, 0.5, 1.8}, 0.0, 0.0},    {"bed", true, {2.0, 1.6, 0.5}, 0.0, 0.0},
      {"plant", true, {0.4, 0.4, 1.0}, 0.0, 0.0},      {"lamp", true, {0.3, 0.3, 1.6}, 0.0, 0.0},
      {"bookshelf", true, {1.0, 0.35, 2.0}, 0.0, 0.0}, {"picture", true, {0.8, 0.05, 0.6}, 1.0, 1.6},
      {"person", false, {0.5, 0.5, 1.75}, 0.0, 0.0},   {"robot", false, {0.6, 0.6, 0.8}, 0.0, 0.0},
  };
}

void SceneConfig::validate() const {
  if (categories.empty()) throw ConfigError("synth.scene.categories", "no categories configured");
  const bool any_static = std::any_of(categories.begin(), categories.end(), [](const auto& c) { return c.is_static; });
  if (!any_static) throw ConfigError("synth.scene.categories", "at least one static category is required");
  if (static_objects == 0) throw ConfigError("synth.scene.static_objects", "at least one static object is required");
  const bool any_dynamic = std::any_of(categories.begin(), categories.end(), [](const auto& c) { return !c.is_static; });
  if (dynamic_objects > 0 && !any_dynamic) {
    throw ConfigError("synth.scene.dynamic_objects", "dynamic objects requested but no dynamic category exists");
  }
  for (int a = 0; a < 3; ++a) {
    if (!(bounds_max[a] > bounds_min[a])) throw ConfigError("synth.scene.bounds", "bounds_max must exceed bounds_min");
  }
  for (const auto& c : categories) {
    if (!(c.extent.minCoeff() > 0.0)) throw ConfigError("synth.scene.categories." + c.name, "extent must be positive");
  }
  if (!(extent_jitter >= 0.0 && extent_jitter < 1.0)) throw ConfigError("synth.scene.extent_jitter", "must lie in [0, 1)");
  if (!(dynamic_amplitude >= 0.0)) throw ConfigError("synth.scene.dynamic_amplitude", "must be non-negative");
}

Vec3 SceneObject::center_at(std::size_t frame) const {
  if (!dynamic || amplitude == 0.0) return center;
  const double a = angular_rate * static_cast<double>(frame) + phase;
  return center + amplitude * Vec3(std::cos(a), std::sin(a), 0.0);
}

Vec3 Scene::static_centroid() const {
  Vec3 sum = Vec3::Zero();
  std::size_t n = 0;
  for (const auto& o : objects) {
    if (o.dynamic) continue;
    sum += o.center;
    ++n;
  }
  return n ? Vec3(sum / static_cast<double>(n)) : Vec3(0.5 * (bounds_min + bounds_max));
}

std::size_t Scene::static_count() const {
  return static_cast<std::size_t>(std::count_if(objects.begin(), objects.end(), [](const auto& o) { return !o.dynamic; }));
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Scene scene;
  scene.categories = config.categories;
  scene.bounds_min = config.bounds_min;
  scene.bounds_max = config.bounds_max;
  scene.seed = seed;

  std::vector<int> static_ids;
  std::vector<int> dynamic_ids;
  for (std::size_t i = 0; i < config.categories.size(); ++i) {
    (config.categories[i].is_static ? static_ids : dynamic_ids).push_back(static_cast<int>(i));
  }

  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto place = [&](int category, bool dynamic) {
    const auto& spec = config.categories[static_cast<std::size_t>(category)];
    SceneObject o;
    o.category = category;
    o.dynamic = dynamic;
    const double s = 1.0 + config.extent_jitter * (2.0 * unit(rng) - 1.0);
    o.extent = spec.extent * s;
    if (unit(rng) < 0.5) std::swap(o.extent.x(), o.extent.y());
    // Keep the whole box inside the bounds.
    for (int a = 0; a < 2; ++a) {
      const double half = std::min(0.5 * o.extent[a], 0.5 * (config.bounds_max[a] - config.bounds_min[a]));
      const double lo = config.bounds_min[a] + half;
      const double hi = config.bounds_max[a] - half;
      o.center[a] = lo + (hi - lo) * unit(rng);
    }
    const double elevation = spec.elevation_low + (spec.elevation_high - spec.elevation_low) * unit(rng);
    o.center.z() = std::min(config.bounds_min.z() + elevation + 0.5 * o.extent.z(),
                            config.bounds_max.z() - 0.5 * o.extent.z());
    if (dynamic) {
      o.amplitude = config.dynamic_amplitude;
      o.angular_rate = 0.02 + 0.04 * unit(rng);
      o.phase = 2.0 * std::numbers::pi * unit(rng);
    }
    return o;
  };
  for (std::size_t i = 0; i < config.static_objects; ++i) {
    const int c = static_ids[static_cast<std::size_t>(unit(rng) * static_cast<double>(static_ids.size())) % static_ids.size()];
    scene.objects.push_back(place(c, false));
  }
  for (std::size_t i = 0; i < config.dynamic_objects; ++i) {
    const int c =
        dynamic_ids[static_cast<std::size_t>(unit(rng) * static_cast<double>(dynamic_ids.size())) % dynamic_ids.size()];
    scene.objects.push_back(place(c, true));
  }
  return scene;
}

void TrajectoryConfig::validate() const {
  if (frames == 0) throw ConfigError("synth.trajectory.frames", "must be at least 1");
  intrinsics.validate();
  if (!(max_step > 0.0)) throw ConfigError("synth.trajectory.max_step", "must be positive");
  if (!(smoothness >= 0.0 && smoothness < 1.0)) throw ConfigError("synth.trajectory.smoothness", "must lie in [0, 1)");
  if (!(turn_std_deg >= 0.0)) throw ConfigError("synth.trajectory.turn_std_deg", "must be non-negative");
  if (!(min_radius >= 0.0)) throw ConfigError("synth.trajectory.min_radius", "must be non-negative");
  if (!(height_high >= height_low)) throw ConfigError("synth.trajectory.height_high", "must be >= height_low");
  if (!(orientation_jitter_deg >= 0.0)) throw ConfigError("synth.trajectory.orientation_jitter_deg", "must be non-negative");
  if (!(noise_std_px >= 0.0)) throw ConfigError("synth.trajectory.noise_std_px", "must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("synth.trajectory.dropout", "must lie in [0, 1)");
  if (!(min_box_area_px >= 0.0)) throw ConfigError("synth.trajectory.min_box_area_px", "must be non-negative");
  if (!(near_plane > 0.0)) throw ConfigError("synth.trajectory.near_plane", "must be positive");
}

Quat look_rotation(const Vec3& forward, double roll) {
  const Vec3 f = forward.normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(f.dot(up)) > 0.999) up = Vec3::UnitY();
  Vec3 right = f.cross(up).normalized();
  Vec3 down = f.cross(right);
  const double c = std::cos(roll);
  const double s = std::sin(roll);
  const Vec3 r2 = c * right + s * down;
  const Vec3 d2 = -s * right + c * down;
  Eigen::Matrix3d rot;
  rot.col(0) = r2;
  rot.col(1) = d2;
  rot.col(2) = f;
  return geometry::canonicalize(Quat(rot).normalized());
}

std::vector<Pose> sample_trajectory(const Scene& scene, const TrajectoryConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Vec3 lo = scene.bounds_min;
  const Vec3 hi = scene.bounds_max;
  const Vec3 centroid = scene.static_centroid();
  const Vec3 box_center = 0.5 * (lo + hi);
  const double margin = std::min(1.0, 0.25 * std::min(hi.x() - lo.x(), hi.y() - lo.y()));
  const double speed = 0.99 * config.max_step;
  const double max_dz = 0.1 * config.max_step;
  const double max_turn = 10.0 * kDeg;

  Vec3 pos;
  for (int attempt = 0; attempt < 100; ++attempt) {
    pos = Vec3(lo.x() + (hi.x() - lo.x()) * unit(rng), lo.y() + (hi.y() - lo.y()) * unit(rng), 0.0);
    if ((pos - centroid).head<2>().norm() >= config.min_radius) break;
  }
  const double z_lo = std::clamp(config.height_low, lo.z(), hi.z());
  const double z_hi = std::clamp(config.height_high, z_lo, hi.z());
  pos.z() = 0.5 * (z_lo + z_hi);

  double heading = 2.0 * std::numbers::pi * unit(rng);
  double turn = 0.0;
  const double jitter_rho = 0.98;
  const double jitter_std = config.orientation_jitter_deg * kDeg;
  const double jitter_innovation = std::sqrt(1.0 - jitter_rho * jitter_rho);
  double yaw_j = 0.0, pitch_j = 0.0, roll_j = 0.0;

  std::vector<Pose> poses;
  poses.reserve(config.frames);
  for (std::size_t f = 0; f < config.frames; ++f) {
    const Vec3 target(centroid.x(), centroid.y(), 1.0);
    Vec3 look = target - pos;
    if (look.head<2>().norm() < 1e-6) look = Vec3(std::cos(heading), std::sin(heading), 0.0);
    const double yaw = std::atan2(look.y(), look.x()) + yaw_j;
    const double pitch = std::atan2(look.z(), look.head<2>().norm()) + pitch_j;
    const Vec3 forward(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
    poses.push_back(geometry::make_pose(pos, look_rotation(forward, roll_j)));

    yaw_j = jitter_rho * yaw_j + jitter_innovation * jitter_std * normal(rng);
    pitch_j = jitter_rho * pitch_j + jitter_innovation * 0.5 * jitter_std * normal(rng);
    roll_j = jitter_rho * roll_j + jitter_innovation * 0.25 * jitter_std * normal(rng);

    turn = config.smoothness * turn + (1.0 - config.smoothness) * config.turn_std_deg * kDeg * normal(rng) * 10.0;
    heading = wrap_angle(heading + std::clamp(turn, -max_turn, max_turn));

    // Steer toward the interior near walls and away from the centroid.
    const Vec3 ahead = pos + 4.0 * speed * Vec3(std::cos(heading), std::sin(heading), 0.0);
    std::optional<double> desired;
    if (ahead.x() < lo.x() + margin || ahead.x() > hi.x() - margin || ahead.y() < lo.y() + margin ||
        ahead.y() > hi.y() - margin) {
      desired = std::atan2(box_center.y() - pos.y(), box_center.x() - pos.x());
    } else if ((ahead - centroid).head<2>().norm() < config.min_radius) {
      desired = std::atan2(pos.y() - centroid.y(), pos.x() - centroid.x());
    }
    if (desired) {
      heading = wrap_angle(heading + std::clamp(wrap_angle(*desired - heading), -max_turn, max_turn));
      turn = 0.0;
    }

    Vec3 next = pos + speed * Vec3(std::cos(heading), std::sin(heading), 0.0);
    next.z() = pos.z() + std::clamp(0.3 * max_dz * normal(rng), -max_dz, max_dz);
    next.x() = std::clamp(next.x(), lo.x(), hi.x());
    next.y() = std::clamp(next.y(), lo.y(), hi.y());
    next.z() = std::clamp(next.z(), z_lo, z_hi);
    pos = next;
  }
  return poses;
}

std::vector<org::Detection> render_detections(const Scene& scene, const Pose& pose, const TrajectoryConfig& config,
                                              std::size_t frame, std::mt19937_64& rng) {
  const auto& k = config.intrinsics;
  k.validate();
  const Eigen::Matrix3d r_wc = geometry::quat_exp(pose.r).toRotationMatrix();
  const Eigen::Matrix3d r_cw = r_wc.transpose();
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double width = static_cast<double>(k.width);
  const double height = static_cast<double>(k.height);

  std::vector<org::Detection> out;
  for (const auto& obj : scene.objects) {
    const Vec3 center = obj.center_at(frame);
    double u_min = std::numeric_limits<double>::infinity();
    double u_max = -u_min;
    double v_min = u_min;
    double v_max = -u_min;
    bool in_front = true;
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 offset(corner & 1 ? 0.5 : -0.5, corner & 2 ? 0.5 : -0.5, corner & 4 ? 0.5 : -0.5);
      const Vec3 pc = r_cw * (center + offset.cwiseProduct(obj.extent) - pose.t);
      if (pc.z() <= config.near_plane) {
        in_front = false;
        break;
      }
      const double u = k.fx * pc.x() / pc.z() + k.cx;
      const double v = k.fy * pc.y() / pc.z() + k.cy;
      u_min = std::min(u_min, u);
      u_max = std::max(u_max, u);
      v_min = std::min(v_min, v);
      v_max = std::max(v_max, v);
    }
    if (!in_front) continue;
    const double full_area = (u_max - u_min) * (v_max - v_min);
    const double cu0 = std::clamp(u_min, 0.0, width);
    const double cu1 = std::clamp(u_max, 0.0, width);
    const double cv0 = std::clamp(v_min, 0.0, height);
    const double cv1 = std::clamp(v_max, 0.0, height);
    const double w = cu1 - cu0;
    const double h = cv1 - cv0;
    if (w <= 0.0 || h <= 0.0 || w * h < config.min_box_area_px) continue;

    org::Detection det;
    det.x = 0.5 * (cu0 + cu1);
    det.y = 0.5 * (cv0 + cv1);
    det.w = w;
    det.h = h;
    det.category = obj.category;
    det.confidence = full_area > 0.0 ? std::min(1.0, w * h / full_area) : 1.0;
    if (config.noise_std_px > 0.0) {
      det.x += config.noise_std_px * noise(rng);
      det.y += config.noise_std_px * noise(rng);
      det.w = std::max(1.0, det.w + config.noise_std_px * noise(rng));
      det.h = std::max(1.0, det.h + config.noise_std_px * noise(rng));
    }
    if (config.dropout > 0.0 && unit(rng) < config.dropout) continue;
    out.push_back(det);
  }
  return out;
}

void SynthConfig::validate() const {
  scene.validate();
  trajectory.validate();
  if (holdout_every == 1) throw ConfigError("synth.holdout_every", "must be 0 or at least 2");
}

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const json& j, const char* key) {
  try {
    auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError(key, "expected 3 numbers");
    return {v[0], v[1], v[2]};
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& prefix) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, e.what());
  }
}

}  // namespace

json synth_config_to_json(const SynthConfig& c) {
  json cats = json::array();
  for (const auto& cat : c.scene.categories) {
    cats.push_back({{"name", cat.name},
                    {"static", cat.is_static},
                    {"extent", vec_json(cat.extent)},
                    {"elevation", {cat.elevation_low, cat.elevation_high}}});
  }
  const auto& t = c.trajectory;
  return {{"scene",
           {{"categories", std::move(cats)},
            {"static_objects", c.scene.static_objects},
            {"dynamic_objects", c.scene.dynamic_objects},
            {"bounds_min", vec_json(c.scene.bounds_min)},
            {"bounds_max", vec_json(c.scene.bounds_max)},
            {"extent_jitter", c.scene.extent_jitter},
            {"dynamic_amplitude", c.scene.dynamic_amplitude}}},
          {"trajectory",
           {{"frames", t.frames},
            {"intrinsics",
             {{"fx", t.intrinsics.fx},
              {"fy", t.intrinsics.fy},
              {"cx", t.intrinsics.cx},
              {"cy", t.intrinsics.cy},
              {"width", t.intrinsics.width},
              {"height", t.intrinsics.height}}},
            {"max_step", t.max_step},
            {"smoothness", t.smoothness},
            {"turn_std_deg", t.turn_std_deg},
            {"min_radius", t.min_radius},
            {"height_low", t.height_low},
            {"height_high", t.height_high},
            {"orientation_jitter_deg", t.orientation_jitter_deg},
            {"noise_std_px", t.noise_std_px},
            {"dropout", t.dropout},
            {"min_box_area_px", t.min_box_area_px},
            {"near_plane", t.near_plane}}},
          {"holdout_every", c.holdout_every}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    const std::string p = "synth.scene.";
    if (s.contains("categories")) {
      c.scene.categories.clear();
      for (const auto& cat : s.at("categories")) {
        CategorySpec spec;
        read_opt(cat, "name", spec.name, p + "categories.");
        read_opt(cat, "static", spec.is_static, p + "categories.");
        if (cat.contains("extent")) spec.extent = vec_from(cat.at("extent"), "synth.scene.categories.extent");
        if (cat.contains("elevation")) {
          auto e = cat.at("elevation").get<std::vector<double>>();
          if (e.size() != 2) throw ConfigError("synth.scene.categories.elevation", "expected [low, high]");
          spec.elevation_low = e[0];
          spec.elevation_high = e[1];
        }
        c.scene.categories.push_back(spec);
      }
    }
    read_opt(s, "static_objects", c.scene.static_objects, p);
    read_opt(s, "dynamic_objects", c.scene.dynamic_objects, p);
    if (s.contains("bounds_min")) c.scene.bounds_min = vec_from(s.at("bounds_min"), "synth.scene.bounds_min");
    if (s.contains("bounds_max")) c.scene.bounds_max = vec_from(s.at("bounds_max"), "synth.scene.bounds_max");
    read_opt(s, "extent_jitter", c.scene.extent_jitter, p);
    read_opt(s, "dynamic_amplitude", c.scene.dynamic_amplitude, p);
  }
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    const std::string p = "synth.trajectory.";
    // Negative counts would wrap around in an unsigned field.
    if (t.contains("frames") && t.at("frames").is_number_integer() && t.at("frames").get<long long>() < 0) {
      throw ConfigError(p + "frames", "must be at least 1");
    }
    read_opt(t, "frames", c.trajectory.frames, p);
    if (t.contains("intrinsics")) {
      const auto& in = t.at("intrinsics");
      const std::string ip = p + "intrinsics.";
      read_opt(in, "fx", c.trajectory.intrinsics.fx, ip);
      read_opt(in, "fy", c.trajectory.intrinsics.fy, ip);
      read_opt(in, "cx", c.trajectory.intrinsics.cx, ip);
      read_opt(in, "cy", c.trajectory.intrinsics.cy, ip);
      read_opt(in, "width", c.trajectory.intrinsics.width, ip);
      read_opt(in, "height", c.trajectory.intrinsics.height, ip);
    }
    read_opt(t, "max_step", c.trajectory.max_step, p);
    read_opt(t, "smoothness", c.trajectory.smoothness, p);
    read_opt(t, "turn_std_deg", c.trajectory.turn_std_deg, p);
    read_opt(t, "min_radius", c.trajectory.min_radius, p);
    read_opt(t, "height_low", c.trajectory.height_low, p);
    read_opt(t, "height_high", c.trajectory.height_high, p);
    read_opt(t, "orientation_jitter_deg", c.trajectory.orientation_jitter_deg, p);
    read_opt(t, "noise_std_px", c.trajectory.noise_std_px, p);
    read_opt(t, "dropout", c.trajectory.dropout, p);
    read_opt(t, "min_box_area_px", c.trajectory.min_box_area_px, p);
    read_opt(t, "near_plane", c.trajectory.near_plane, p);
  }
  read_opt(j, "holdout_every", c.holdout_every, "synth.");
  return c;
}

data::Dataset generate_dataset(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const Scene scene = generate_scene(config.scene, seed);
  const auto poses = sample_trajectory(scene, config.trajectory, seed);

  data::Dataset ds;
  for (std::size_t i = 0; i < scene.categories.size(); ++i) {
    ds.manifest.categories.push_back({static_cast<int>(i), scene.categories[i].name, scene.categories[i].is_static});
  }
  ds.manifest.intrinsics = config.trajectory.intrinsics;
  ds.manifest.splits["train"] = {"train"};
  if (config.holdout_every > 0) ds.manifest.splits["test"] = {"test"};
  ds.manifest.meta = {{"generator", "orgpose-synth"}, {"seed", seed}, {"config", synth_config_to_json(config)}};

  ds.frames.reserve(poses.size());
  for (std::size_t f = 0; f < poses.size(); ++f) {
    std::mt19937_64 rng(derive_seed(seed, 1000 + f));
    data::FrameRecord rec;
    rec.frame_id = static_cast<std::int64_t>(f);
    const bool held_out = config.holdout_every > 0 && f % config.holdout_every == config.holdout_every / 2;
    rec.sequence = held_out ? "test" : "train";
    rec.t = poses[f].t;
    rec.q = geometry::canonicalize(geometry::quat_exp(poses[f].r));
    rec.detections = render_detections(scene, poses[f], config.trajectory, f, rng);
    ds.frames.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace orgpose::synth
