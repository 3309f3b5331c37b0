#include "orgpose/geometry/pose.hpp"

#include <cmath>
#include <numbers>

#include "orgpose/error.hpp"

namespace orgpose::geometry {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0)) throw ConfigError("intrinsics.fx", "must be positive");
  if (!(fy > 0.0)) throw ConfigError("intrinsics.fy", "must be positive");
  if (width <= 0) throw ConfigError("intrinsics.width", "must be positive");
  if (height <= 0) throw ConfigError("intrinsics.height", "must be positive");
}

Quat canonicalize(const Quat& q) {
  if (q.w() < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
  return q;
}

Vec3 quat_log(const Quat& q) {
  const double norm = q.norm();
  if (!(std::abs(norm - 1.0) <= 1e-6)) {
    throw NumericalError("quat_log: quaternion norm " + std::to_string(norm) + " is not unit");
  }
  const Quat c = canonicalize(q);
  const Vec3 v = c.vec();
  const double vn = v.norm();
  if (vn < 1e-12) return Vec3::Zero();
  // atan2(|v|, w) == acos(w) for a unit quaternion, without the loss of
  // precision acos has near w = 1.
  return v / vn * std::atan2(vn, c.w());
}

Quat quat_exp(const Vec3& r) {
  const double theta = r.norm();
  if (theta < 1e-12) return Quat(1.0, r.x(), r.y(), r.z()).normalized();
  const Vec3 v = r * (std::sin(theta) / theta);
  return Quat(std::cos(theta), v.x(), v.y(), v.z());
}

Pose make_pose(const Vec3& t, const Quat& q) { return {t, quat_log(q)}; }

Quat rotation_of(const Pose& p) { return quat_exp(p.r); }

double pose_distance(const Pose& p, const Pose& target, double beta, double gamma) {
  return (p.t - target.t).lpNorm<1>() * std::exp(-beta) + beta + (p.r - target.r).lpNorm<1>() * std::exp(-gamma) +
         gamma;
}

double pose_distance(const RelativePose& v, const RelativePose& target, double beta, double gamma) {
  return (v.dt - target.dt).lpNorm<1>() * std::exp(-beta) + beta +
         (v.dr - target.dr).lpNorm<1>() * std::exp(-gamma) + gamma;
}

RelativePose relative_pose(const Pose& pi, const Pose& pj) { return {pi.t - pj.t, pi.r - pj.r}; }

double rotation_error_deg(const Vec3& r1, const Vec3& r2) {
  const Quat q1 = quat_exp(r1);
  const Quat q2 = quat_exp(r2);
  // 2 acos(|<q1, q2>|), evaluated through the relative rotation for accuracy
  // at small angles.
  const Quat d = canonicalize(q1.conjugate() * q2);
  const double angle = 2.0 * std::atan2(d.vec().norm(), d.w());
  return angle * 180.0 / std::numbers::pi;
}

double translation_error(const Vec3& t1, const Vec3& t2) { return (t1 - t2).norm(); }

}  // namespace orgpose::geometry
