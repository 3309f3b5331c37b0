#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace orgpose::geometry {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

/// Camera-to-world pose. `t` is the camera center in world coordinates
/// (meters); `r` is the logarithm of the unit quaternion rotating camera
/// axes into world axes (half the rotation angle times the unit axis).
struct Pose {
  Vec3 t = Vec3::Zero();
  Vec3 r = Vec3::Zero();

  bool operator==(const Pose& other) const { return t == other.t && r == other.r; }
};

/// Component-wise pose difference used by the relative-pose loss.
struct RelativePose {
  Vec3 dt = Vec3::Zero();
  Vec3 dr = Vec3::Zero();
};

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  /// Throws ConfigError on non-positive focal lengths or image size.
  void validate() const;
};

/// Flips the quaternion sign so that w >= 0.
Quat canonicalize(const Quat& q);

/// Log map of a unit quaternion. Throws NumericalError when |q| deviates from
/// one by more than 1e-6.
Vec3 quat_log(const Quat& q);

/// Inverse of quat_log; always returns a unit quaternion.
Quat quat_exp(const Vec3& r);

Pose make_pose(const Vec3& t, const Quat& q);
Quat rotation_of(const Pose& p);

/// |t - t*|_1 e^-beta + beta + |r - r*|_1 e^-gamma + gamma
double pose_distance(const Pose& p, const Pose& target, double beta, double gamma);
double pose_distance(const RelativePose& v, const RelativePose& target, double beta, double gamma);

RelativePose relative_pose(const Pose& pi, const Pose& pj);

/// Angle in degrees between the rotations exp(r1) and exp(r2), in [0, 180].
double rotation_error_deg(const Vec3& r1, const Vec3& r2);
double translation_error(const Vec3& t1, const Vec3& t2);

}  // namespace orgpose::geometry
