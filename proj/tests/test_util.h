#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "vl/common/rng.h"
#include "vl/geometry/geometry.h"
#include "vl/matching/matching.h"

namespace vl::test {

inline double deg(double radians) { return radians * 180.0 / std::numbers::pi; }
inline double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

inline Intrinsics small_camera() { return {110, 110, 79.5, 59.5, 160, 120}; }

inline Eigen::Vector3d random_unit(SplitMix64& rng) {
  Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

/// Camera inside a 10 x 10 x 3 m room looking roughly horizontally.
inline Pose random_room_pose(SplitMix64& rng) {
  const Eigen::Vector3d center(rng.uniform(1, 9), rng.uniform(1, 9), rng.uniform(0.5, 2.5));
  const double yaw = rng.uniform(0, 2 * std::numbers::pi);
  const double pitch = rng.uniform(-0.3, 0.3);
  const Eigen::Vector3d forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch));
  return Pose::look_at(center, forward, Eigen::Vector3d(0, 0, -1));
}

/// Rotate by `angle` about a random axis and shift the center by `dist`.
inline Pose perturb(const Pose& p, double dist, double angle, SplitMix64& rng) {
  Pose out;
  out.rotation = rotation_about(random_unit(rng), angle) * p.rotation;
  const Eigen::Vector3d center = p.camera_center() + dist * random_unit(rng);
  out.translation = -out.rotation * center;
  return out;
}

/// World point seen by `pose` at a random pixel and depth in [zmin, zmax].
inline Correspondence2D3D visible_point(const Pose& pose, const Intrinsics& k, SplitMix64& rng, double zmin = 1.0,
                                        double zmax = 8.0) {
  const Eigen::Vector2d px(rng.uniform(0, k.width - 1), rng.uniform(0, k.height - 1));
  const double z = rng.uniform(zmin, zmax);
  return {px, backproject(k, pose, px, z), 0};
}

inline std::vector<Correspondence2D3D> visible_points(const Pose& pose, const Intrinsics& k, std::size_t n,
                                                      SplitMix64& rng) {
  std::vector<Correspondence2D3D> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(visible_point(pose, k, rng));
  return out;
}

}  // namespace vl::test
