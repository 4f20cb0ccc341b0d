#pragma once

#include <string>
#include <string_view>

#include <Eigen/Core>

namespace vl {

/// Rigid world->camera transform: x_cam = rotation * x_world + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Eigen::Matrix4d& m);
  /// Camera looking along `forward` from `center` with image-down roughly `down`.
  static Pose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& forward, const Eigen::Vector3d& down);

  Eigen::Matrix4d matrix() const;
  Eigen::Vector3d camera_center() const { return -rotation.transpose() * translation; }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& x_world) const { return rotation * x_world + translation; }

  /// max |R^T R - I| entry and |det R - 1|.
  double orthonormality_error() const;

  bool operator==(const Pose&) const = default;
};

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  /// fx, fy > 0 and principal point strictly inside the image.
  bool valid() const;
  Eigen::Matrix3d matrix() const;

  bool operator==(const Intrinsics&) const = default;
};

struct PoseError {
  double translation_error = 0;  // meters
  double rotation_error = 0;     // degrees
};

struct Projection {
  Eigen::Vector2d pixel;
  double depth = 0;
};

/// b applied first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

/// Throws BehindCamera when the camera-frame depth is <= 1e-9.
Projection project(const Intrinsics& k, const Pose& p, const Eigen::Vector3d& x_world);
/// Throws NonPositiveDepth when depth <= 0.
Eigen::Vector3d backproject(const Intrinsics& k, const Pose& p, const Eigen::Vector2d& pixel, double depth);

PoseError pose_error(const Pose& est, const Pose& gt);

/// Closest rotation in Frobenius norm (SVD polar factor, det fixed to +1).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r);

/// Rodrigues exponential of an axis-angle vector.
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega);

/// Rotation about world axis by angle (radians).
Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle);

/// 12 whitespace-separated decimals, row-major R then t, 17 significant
/// digits, independent of the global locale.
std::string to_pose_string(const Pose& p);
/// Throws ErrorCode::io on malformed input.
Pose parse_pose_string(std::string_view text);

}  // namespace vl
