#include <doctest.h>

#include <cmath>
#include <numbers>

#include "orgpose/error.hpp"
#include "orgpose/geometry/pose.hpp"
#include "support.hpp"

using namespace orgpose;
using namespace orgpose::geometry;

TEST_CASE("quaternion exp and log are inverse") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 r{u(rng), u(rng), u(rng)};
    if (r.norm() >= std::numbers::pi / 2) continue;
    const Vec3 back = quat_log(quat_exp(r));
    CHECK((back - r).norm() < 1e-12);
  }
  CHECK(quat_log(Quat::Identity()).norm() == 0.0);
  CHECK(std::abs(quat_exp(Vec3{0.3, -0.2, 0.9}).norm() - 1.0) < 1e-15);
}

TEST_CASE("quaternion log rejects non-unit input") {
  CHECK_THROWS_AS(quat_log(Quat(2.0, 0.0, 0.0, 0.0)), NumericalError);
}

TEST_CASE("log of a half turn about z") {
  // 180 degrees about z: q = (0, 0, 0, 1), log = (pi/2) z.
  const Vec3 r = quat_log(Quat(0.0, 0.0, 0.0, 1.0));
  CHECK(r.z() == doctest::Approx(std::numbers::pi / 2).epsilon(1e-14));
  CHECK(r.x() == 0.0);
}

TEST_CASE("canonical sign has non-negative w") {
  const Quat q = canonicalize(Quat(-0.5, 0.5, 0.5, 0.5));
  CHECK(q.w() == 0.5);
  CHECK(q.x() == -0.5);
}

TEST_CASE("pose distance of a pose with itself is beta plus gamma") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Pose p = testing::random_pose(rng);
    CHECK(std::abs(pose_distance(p, p, 0.0, -3.0) - (-3.0)) <= 1e-12);
    CHECK(std::abs(pose_distance(p, p, 0.7, 1.1) - 1.8) <= 1e-12);
  }
}

TEST_CASE("pose distance matches the written-out formula") {
  // |dt|_1 = 2, |dr|_1 = 0.1 at beta 0, gamma -3: 2 + 0.1 e^3 - 3.
  Pose p;
  Pose q;
  q.t = {1.0, -0.5, 0.5};
  q.r = {0.05, 0.0, -0.05};
  CHECK(pose_distance(p, q, 0.0, -3.0) == doctest::Approx(2.0 + 0.1 * std::exp(3.0) - 3.0).epsilon(1e-14));
  CHECK(pose_distance(p, q, 0.0, -3.0) == doctest::Approx(1.00855).epsilon(1e-5));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    const Pose a = testing::random_pose(rng);
    const Pose b = testing::random_pose(rng);
    CHECK(pose_distance(a, b, 0.3, -1.2) ==
          doctest::Approx(testing::distance_by_hand(a.t - b.t, a.r - b.r, 0.3, -1.2)).epsilon(1e-14));
  }
}

TEST_CASE("relative pose is the component-wise difference") {
  Pose a;
  Pose b;
  a.t = {1, 2, 3};
  b.t = {0, 1, 5};
  a.r = {0.1, 0, 0};
  const auto v = relative_pose(a, b);
  CHECK(v.dt == Vec3(1, 1, -2));
  CHECK(v.dr == Vec3(0.1, 0, 0));
}

TEST_CASE("rotation error is the angle between rotations") {
  const Vec3 z = Vec3::Zero();
  // log = (theta/2) axis.
  CHECK(rotation_error_deg(z, Vec3(0, 0, std::numbers::pi / 4)) == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(rotation_error_deg(z, Vec3(std::numbers::pi / 2, 0, 0)) == doctest::Approx(180.0).epsilon(1e-12));
  CHECK(rotation_error_deg(Vec3(0.2, 0.1, 0), Vec3(0.2, 0.1, 0)) == doctest::Approx(0.0));
  // q and -q are the same rotation.
  const Quat q = quat_exp(Vec3(0.3, 0.2, 0.1));
  const Quat neg(-q.w(), -q.x(), -q.y(), -q.z());
  CHECK(rotation_error_deg(quat_log(q), quat_log(neg)) < 1e-6);
  CHECK(translation_error(Vec3(1, 0, 0), Vec3(0, 0, 0)) == 1.0);
}

TEST_CASE("intrinsics validation") {
  CameraIntrinsics k;
  CHECK_NOTHROW(k.validate());
  k.fx = 0.0;
  CHECK_THROWS_AS(k.validate(), ConfigError);
}
