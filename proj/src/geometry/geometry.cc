#include "vl/geometry/geometry.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "vl/common/error.h"

namespace vl {

namespace {
constexpr double kDriftTolerance = 1e-12;
constexpr double kMinDepth = 1e-9;
}  // namespace

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Pose Pose::look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& forward, const Eigen::Vector3d& down) {
  const Eigen::Vector3d z = forward.normalized();
  const Eigen::Vector3d x = down.cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Pose p;
  p.rotation.row(0) = x.transpose();
  p.rotation.row(1) = y.transpose();
  p.rotation.row(2) = z.transpose();
  p.translation = -p.rotation * center;
  return p;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double Pose::orthonormality_error() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

bool Intrinsics::valid() const {
  return fx > 0 && fy > 0 && width > 0 && height > 0 && cx > 0 && cx < width && cy > 0 && cy < height;
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
  return u * v.transpose();
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  const double drift = (out.rotation.transpose() * out.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (drift > kDriftTolerance) out.rotation = orthonormalize(out.rotation);
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

Projection project(const Intrinsics& k, const Pose& p, const Eigen::Vector3d& x_world) {
  const Eigen::Vector3d xc = p.to_camera(x_world);
  if (!(xc.z() > kMinDepth)) throw Error(ErrorCode::behind_camera, "point has camera depth " + std::to_string(xc.z()));
  return {{k.fx * xc.x() / xc.z() + k.cx, k.fy * xc.y() / xc.z() + k.cy}, xc.z()};
}

Eigen::Vector3d backproject(const Intrinsics& k, const Pose& p, const Eigen::Vector2d& pixel, double depth) {
  if (!(depth > 0)) throw Error(ErrorCode::non_positive_depth, "depth " + std::to_string(depth));
  const Eigen::Vector3d xc((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return p.rotation.transpose() * (xc - p.translation);
}

PoseError pose_error(const Pose& est, const Pose& gt) {
  PoseError e;
  e.translation_error = (est.camera_center() - gt.camera_center()).norm();
  const double c = std::clamp(((est.rotation.transpose() * gt.rotation).trace() - 1.0) / 2.0, -1.0, 1.0);
  e.rotation_error = std::acos(c) * 180.0 / std::numbers::pi;
  return e;
}

std::string to_pose_string(const Pose& p) {
  std::string out;
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    if (!out.empty()) out.push_back(' ');
    out.append(buf, res.ptr);
  };
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(p.rotation(r, c));
  for (int i = 0; i < 3; ++i) put(p.translation(i));
  return out;
}

Pose parse_pose_string(std::string_view text) {
  double v[12];
  const char* it = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 12; ++i) {
    while (it < end && (*it == ' ' || *it == '\t' || *it == '\n' || *it == '\r')) ++it;
    const auto res = std::from_chars(it, end, v[i]);
    if (res.ec != std::errc()) throw Error(ErrorCode::io, "malformed pose string: '" + std::string(text) + "'");
    it = res.ptr;
  }
  while (it < end && (*it == ' ' || *it == '\t' || *it == '\n' || *it == '\r')) ++it;
  if (it != end) throw Error(ErrorCode::io, "trailing data in pose string");
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[3 * r + c];
  p.translation = {v[9], v[10], v[11]};
  return p;
}

}  // namespace vl
