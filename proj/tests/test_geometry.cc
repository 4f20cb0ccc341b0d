#include <Eigen/Geometry>

#include <clocale>
#include <cmath>

#include "doctest.h"
#include "test_util.h"
#include "vl/common/error.h"
#include "vl/geometry/geometry.h"

using namespace vl;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::io;
}

// Rotation angle from the quaternion of R_est * R_gt^T, independent of the
// trace formula used by pose_error.
double quaternion_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Quaterniond qa(a), qb(b);
  const double d = std::min(1.0, std::abs(qa.dot(qb)));
  return test::deg(2.0 * std::acos(d));
}

}  // namespace

TEST_CASE("project then backproject returns the original point") {
  SplitMix64 rng(11);
  const Intrinsics k = test::small_camera();
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Pose pose = test::random_room_pose(rng);
    const auto c = test::visible_point(pose, k, rng, 0.2, 20.0);
    const Projection p = project(k, pose, c.world);
    const Eigen::Vector3d back = backproject(k, pose, p.pixel, p.depth);
    worst = std::max(worst, (back - c.world).norm());
    worst = std::max(worst, (p.pixel - c.pixel).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("projection matches the pinhole formula") {
  const Intrinsics k{200, 180, 64, 48, 128, 96};
  const Pose id;
  const Projection p = project(k, id, {0.5, -0.25, 2.0});
  CHECK(p.pixel.x() == doctest::Approx(64 + 200 * 0.25));
  CHECK(p.pixel.y() == doctest::Approx(48 - 180 * 0.125));
  CHECK(p.depth == 2.0);
}

TEST_CASE("points behind the camera and non-positive depths are rejected") {
  const Intrinsics k = test::small_camera();
  CHECK(code_of([&] { project(k, Pose{}, {0, 0, -1}); }) == ErrorCode::behind_camera);
  CHECK(code_of([&] { project(k, Pose{}, {0, 0, 0}); }) == ErrorCode::behind_camera);
  CHECK(code_of([&] { backproject(k, Pose{}, {1, 1}, 0.0); }) == ErrorCode::non_positive_depth);
  CHECK(code_of([&] { backproject(k, Pose{}, {1, 1}, -2.0); }) == ErrorCode::non_positive_depth);
}

TEST_CASE("pose_error agrees with the quaternion oracle") {
  SplitMix64 rng(12);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const Pose gt = test::random_room_pose(rng);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const Pose est = test::perturb(gt, rng.uniform(0, 3), angle, rng);
    const PoseError e = pose_error(est, gt);
    worst = std::max(worst, std::abs(e.rotation_error - quaternion_angle_deg(est.rotation, gt.rotation)));
    CHECK(e.translation_error == doctest::Approx((est.camera_center() - gt.camera_center()).norm()).epsilon(1e-12));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("pose_error of a pose with itself is zero") {
  SplitMix64 rng(13);
  const Pose p = test::random_room_pose(rng);
  const PoseError e = pose_error(p, p);
  CHECK(e.translation_error == 0.0);
  CHECK(e.rotation_error < 1e-6);
}

TEST_CASE("compose and inverse are consistent") {
  SplitMix64 rng(14);
  for (int i = 0; i < 50; ++i) {
    const Pose a = test::random_room_pose(rng), b = test::random_room_pose(rng);
    const Eigen::Vector3d x(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    CHECK((compose(a, b).to_camera(x) - a.to_camera(b.to_camera(x))).norm() < 1e-12);
    const Pose round = compose(inverse(a), a);
    CHECK((round.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(round.translation.norm() < 1e-12);
    CHECK((Pose::from_matrix(a.matrix()).rotation - a.rotation).norm() == 0.0);
  }
}

TEST_CASE("look_at points the optical axis along forward") {
  const Eigen::Vector3d center(1, 2, 1.5), forward(0, 1, 0);
  const Pose p = Pose::look_at(center, forward, {0, 0, -1});
  CHECK((p.camera_center() - center).norm() < 1e-12);
  CHECK((p.rotation.row(2).transpose() - forward).norm() < 1e-12);
  CHECK(p.orthonormality_error() < 1e-12);
  const Eigen::Vector3d ahead = p.to_camera(center + 3.0 * forward);
  CHECK(ahead.head<2>().norm() < 1e-12);
  CHECK(ahead.z() == doctest::Approx(3.0));
}

TEST_CASE("so3_exp matches Eigen's angle-axis") {
  SplitMix64 rng(15);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d axis = test::random_unit(rng);
    const double angle = rng.uniform(0, 3.1);
    const Eigen::Matrix3d oracle = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    CHECK((so3_exp(angle * axis) - oracle).norm() < 1e-12);
    CHECK((rotation_about(axis, angle) - oracle).norm() < 1e-12);
  }
  CHECK((so3_exp(Eigen::Vector3d::Zero()) - Eigen::Matrix3d::Identity()).norm() == 0.0);
  CHECK((so3_exp(Eigen::Vector3d(1e-12, 0, 0)) - Eigen::Matrix3d::Identity()).norm() < 1e-11);
}

TEST_CASE("orthonormalize returns the nearest rotation") {
  SplitMix64 rng(16);
  const Eigen::Matrix3d r = rotation_about(test::random_unit(rng), 0.7);
  Eigen::Matrix3d noisy = r;
  for (int i = 0; i < 9; ++i) noisy.data()[i] += 1e-4 * rng.normal();
  const Eigen::Matrix3d fixed = orthonormalize(noisy);
  CHECK((fixed.transpose() * fixed - Eigen::Matrix3d::Identity()).norm() < 1e-12);
  CHECK(fixed.determinant() == doctest::Approx(1.0));
  CHECK((fixed - r).norm() < 1e-3);
  CHECK((orthonormalize(r) - r).norm() < 1e-12);
}

TEST_CASE("pose strings round-trip exactly and ignore the locale") {
  SplitMix64 rng(17);
  const char* old = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = old != nullptr ? old : "C";
  std::setlocale(LC_NUMERIC, "de_DE.UTF-8");  // comma decimal point when installed
  for (int i = 0; i < 100; ++i) {
    const Pose p = test::random_room_pose(rng);
    const std::string s = to_pose_string(p);
    CHECK(s.find(',') == std::string::npos);
    CHECK(parse_pose_string(s) == p);
  }
  std::setlocale(LC_NUMERIC, saved.c_str());
}

TEST_CASE("malformed pose strings are rejected") {
  CHECK(code_of([] { parse_pose_string("1 0 0 0 1 0 0 0 1 0 0"); }) == ErrorCode::io);
  CHECK(code_of([] { parse_pose_string("1 0 0 0 1 0 0 0 1 0 0 x"); }) == ErrorCode::io);
  CHECK(code_of([] { parse_pose_string("1 0 0 0 1 0 0 0 1 0 0 0 7"); }) == ErrorCode::io);
}

TEST_CASE("intrinsics validity") {
  CHECK(test::small_camera().valid());
  CHECK_FALSE(Intrinsics{0, 100, 10, 10, 20, 20}.valid());
  CHECK_FALSE(Intrinsics{100, 100, 25, 10, 20, 20}.valid());
}
