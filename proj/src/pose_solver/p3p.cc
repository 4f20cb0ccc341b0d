#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "vl/common/error.h"
#include "vl/pose_solver/pose_solver.h"

namespace vl {

namespace {

Eigen::Vector3d bearing(const Intrinsics& k, const Eigen::Vector2d& pixel) {
  return Eigen::Vector3d((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0).normalized();
}

double eval_quartic(const std::array<double, 5>& a, double x) {
  return (((a[0] * x + a[1]) * x + a[2]) * x + a[3]) * x + a[4];
}

double eval_derivative(const std::array<double, 5>& a, double x) {
  return ((4 * a[0] * x + 3 * a[1]) * x + 2 * a[2]) * x + a[3];
}

// Real roots of a[0] x^4 + ... + a[4] from the companion matrix, each
// polished by a few Newton steps. Near-real pairs are kept and left to the
// reprojection check downstream.
std::vector<double> real_quartic_roots(const std::array<double, 5>& a) {
  std::vector<double> roots;
  if (std::abs(a[0]) < 1e-300) return roots;
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) companion(0, i) = -a[i + 1] / a[0];
  for (int i = 1; i < 4; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::Matrix4d> solver(companion, false);
  if (solver.info() != Eigen::Success) return roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = solver.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-5 * std::max(1.0, std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 5; ++it) {
      const double d = eval_derivative(a, x);
      if (d == 0.0) break;
      const double step = eval_quartic(a, x) / d;
      x -= step;
      if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

}  // namespace

std::vector<Pose> p3p(std::span<const Correspondence2D3D> c, const Intrinsics& k) {
  if (c.size() != 3) throw Error(ErrorCode::too_few_correspondences, "p3p needs exactly three correspondences");
  Eigen::Vector3d P1 = c[0].world, P2 = c[1].world;
  const Eigen::Vector3d P3w = c[2].world;
  if (0.5 * (P2 - P1).cross(P3w - P1).norm() <= 1e-9) {
    throw Error(ErrorCode::degenerate_configuration, "collinear world points");
  }
  Eigen::Vector3d f1 = bearing(k, c[0].pixel), f2 = bearing(k, c[1].pixel);
  const Eigen::Vector3d f3w = bearing(k, c[2].pixel);

  // Intermediate camera frame: e1 along f1, e3 normal to the f1/f2 plane.
  auto camera_frame = [&](Eigen::Matrix3d& T) {
    const Eigen::Vector3d e1 = f1;
    const Eigen::Vector3d e3 = f1.cross(f2).normalized();
    const Eigen::Vector3d e2 = e3.cross(e1);
    T.row(0) = e1;
    T.row(1) = e2;
    T.row(2) = e3;
  };
  if (f1.cross(f2).norm() < 1e-12) throw Error(ErrorCode::degenerate_configuration, "parallel bearings");
  Eigen::Matrix3d T;
  camera_frame(T);
  Eigen::Vector3d f3 = T * f3w;
  if (f3.z() > 0) {
    std::swap(f1, f2);
    std::swap(P1, P2);
    camera_frame(T);
    f3 = T * f3w;
  }
  if (std::abs(f3.z()) < 1e-12) throw Error(ErrorCode::degenerate_configuration, "coplanar bearings");

  // Intermediate world frame: n1 along P1P2, n3 normal to the point plane.
  const Eigen::Vector3d n1 = (P2 - P1).normalized();
  const Eigen::Vector3d n3 = n1.cross(P3w - P1).normalized();
  const Eigen::Vector3d n2 = n3.cross(n1);
  Eigen::Matrix3d N;
  N.row(0) = n1;
  N.row(1) = n2;
  N.row(2) = n3;
  const Eigen::Vector3d P3 = N * (P3w - P1);

  const double d_12 = (P2 - P1).norm();
  const double f_1 = f3.x() / f3.z(), f_2 = f3.y() / f3.z();
  const double p_1 = P3.x(), p_2 = P3.y();
  const double cos_beta = f1.dot(f2);
  double b = 1.0 / (1.0 - cos_beta * cos_beta) - 1.0;
  b = cos_beta < 0 ? -std::sqrt(b) : std::sqrt(b);

  const double f_1_2 = f_1 * f_1, f_2_2 = f_2 * f_2;
  const double p_1_2 = p_1 * p_1, p_1_3 = p_1_2 * p_1, p_1_4 = p_1_3 * p_1;
  const double p_2_2 = p_2 * p_2, p_2_3 = p_2_2 * p_2, p_2_4 = p_2_3 * p_2;
  const double d_12_2 = d_12 * d_12, b_2 = b * b;

  std::array<double, 5> a;
  a[0] = -f_2_2 * p_2_4 - p_2_4 * f_1_2 - p_2_4;
  a[1] = 2 * p_2_3 * d_12 * b + 2 * f_2_2 * p_2_3 * d_12 * b - 2 * f_2 * p_2_3 * f_1 * d_12;
  a[2] = -f_2_2 * p_2_2 * p_1_2 - f_2_2 * p_2_2 * d_12_2 * b_2 - f_2_2 * p_2_2 * d_12_2 + f_2_2 * p_2_4 +
         p_2_4 * f_1_2 + 2 * p_1 * p_2_2 * d_12 + 2 * f_1 * f_2 * p_1 * p_2_2 * d_12 * b -
         p_2_2 * p_1_2 * f_1_2 + 2 * p_1 * p_2_2 * f_2_2 * d_12 - p_2_2 * d_12_2 * b_2 - 2 * p_1_2 * p_2_2;
  a[3] = 2 * p_1_2 * p_2 * d_12 * b + 2 * f_2 * p_2_3 * f_1 * d_12 - 2 * f_2_2 * p_2_3 * d_12 * b -
         2 * p_1 * p_2 * d_12_2 * b;
  a[4] = -2 * f_2 * p_2_2 * f_1 * p_1 * d_12 * b + f_2_2 * p_2_2 * d_12_2 + 2 * p_1_3 * d_12 - p_1_2 * d_12_2 +
         f_2_2 * p_2_2 * p_1_2 - p_1_4 - 2 * f_2_2 * p_2_2 * p_1 * d_12 + p_2_2 * f_1_2 * p_1_2 +
         f_2_2 * p_2_2 * d_12_2 * b_2;

  std::vector<Pose> out;
  for (const double root : real_quartic_roots(a)) {
    if (std::abs(root) > 1.0 + 1e-6) continue;
    const double cos_theta = std::clamp(root, -1.0, 1.0);
    const double cot_alpha =
        (-f_1 * p_1 / f_2 - cos_theta * p_2 + d_12 * b) / (-f_1 * cos_theta * p_2 / f_2 + p_1 - d_12);
    if (!std::isfinite(cot_alpha)) continue;
    const double sin_theta = std::sqrt(1.0 - cos_theta * cos_theta);
    const double sin_alpha = std::sqrt(1.0 / (cot_alpha * cot_alpha + 1.0));
    double cos_alpha = std::sqrt(1.0 - sin_alpha * sin_alpha);
    if (cot_alpha < 0) cos_alpha = -cos_alpha;

    const double s = d_12 * sin_alpha * (sin_alpha * b + cos_alpha);
    Eigen::Vector3d C(d_12 * cos_alpha * (sin_alpha * b + cos_alpha), cos_theta * s, sin_theta * s);
    C = P1 + N.transpose() * C;
    Eigen::Matrix3d R;
    R << -cos_alpha, -sin_alpha * cos_theta, -sin_alpha * sin_theta,  //
        sin_alpha, -cos_alpha * cos_theta, -cos_alpha * sin_theta,    //
        0.0, -sin_theta, cos_theta;
    // Camera-to-world orientation.
    const Eigen::Matrix3d R_cw = N.transpose() * R.transpose() * T;
    if (!R_cw.allFinite() || !C.allFinite()) continue;

    Pose pose;
    pose.rotation = orthonormalize(R_cw.transpose());
    pose.translation = -pose.rotation * C;
    pose = refine_gn(pose, c, k, 10);

    bool exact = true;
    for (const Correspondence2D3D& corr : c) exact = exact && reprojection_error(pose, k, corr) < 1e-6;
    if (!exact) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Pose& q) {
      return (q.rotation - pose.rotation).cwiseAbs().maxCoeff() < 1e-9 &&
             (q.translation - pose.translation).cwiseAbs().maxCoeff() < 1e-9;
    });
    if (!duplicate) out.push_back(pose);
  }
  return out;
}

}  // namespace vl
