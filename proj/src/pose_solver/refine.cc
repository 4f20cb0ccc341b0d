#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "vl/pose_solver/pose_solver.h"

namespace vl {

namespace {

constexpr double kMinDepth = 1e-9;

struct Normal {
  Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
};

// Summed squared reprojection error over points in front of the camera.
double cost(const Pose& pose, std::span<const Correspondence2D3D> c, const Intrinsics& k) {
  double total = 0;
  for (const Correspondence2D3D& corr : c) {
    const Eigen::Vector3d x = pose.to_camera(corr.world);
    if (x.z() <= kMinDepth) continue;
    const double du = k.fx * x.x() / x.z() + k.cx - corr.pixel.x();
    const double dv = k.fy * x.y() / x.z() + k.cy - corr.pixel.y();
    total += du * du + dv * dv;
  }
  return total;
}

Eigen::Matrix<double, 2, 6> jacobian_at(const Eigen::Vector3d& x, const Intrinsics& k) {
  const double iz = 1.0 / x.z();
  Eigen::Matrix<double, 2, 3> dp;
  dp << k.fx * iz, 0.0, -k.fx * x.x() * iz * iz,  //
      0.0, k.fy * iz, -k.fy * x.y() * iz * iz;
  Eigen::Matrix3d skew;
  skew << 0.0, -x.z(), x.y(),  //
      x.z(), 0.0, -x.x(),      //
      -x.y(), x.x(), 0.0;
  Eigen::Matrix<double, 2, 6> j;
  j.leftCols<3>() = -dp * skew;
  j.rightCols<3>() = dp;
  return j;
}

Normal normal_equations(const Pose& pose, std::span<const Correspondence2D3D> c, const Intrinsics& k) {
  Normal n;
  for (const Correspondence2D3D& corr : c) {
    const Eigen::Vector3d x = pose.to_camera(corr.world);
    if (x.z() <= kMinDepth) continue;
    const Eigen::Vector2d r(k.fx * x.x() / x.z() + k.cx - corr.pixel.x(), k.fy * x.y() / x.z() + k.cy - corr.pixel.y());
    const Eigen::Matrix<double, 2, 6> j = jacobian_at(x, k);
    n.jtj.noalias() += j.transpose() * j;
    n.jtr.noalias() += j.transpose() * r;
  }
  return n;
}

}  // namespace

double reprojection_error(const Pose& pose, const Intrinsics& k, const Correspondence2D3D& c) {
  const Eigen::Vector3d x = pose.to_camera(c.world);
  if (x.z() <= kMinDepth) return std::numeric_limits<double>::infinity();
  return std::hypot(k.fx * x.x() / x.z() + k.cx - c.pixel.x(), k.fy * x.y() / x.z() + k.cy - c.pixel.y());
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& pose, const Intrinsics& k,
                                                  const Eigen::Vector3d& world) {
  return jacobian_at(pose.to_camera(world), k);
}

Pose apply_update(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  const Eigen::Matrix3d r = so3_exp(delta.head<3>());
  Pose out;
  out.rotation = r * pose.rotation;
  out.translation = r * pose.translation + delta.tail<3>();
  return out;
}

RefineResult refine_gn_detailed(const Pose& initial, std::span<const Correspondence2D3D> c, const Intrinsics& k,
                                int max_iters) {
  RefineResult out;
  out.pose = initial;
  double current = cost(initial, c, k);
  out.cost_history.push_back(current);
  double lambda = 1e-4;
  for (int it = 0; it < max_iters; ++it) {
    out.iterations = it + 1;
    const Normal n = normal_equations(out.pose, c, k);
    bool accepted = false;
    double step_norm = 0;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> a = n.jtj;
      for (int i = 0; i < 6; ++i) a(i, i) += lambda * (n.jtj(i, i) + 1e-9);
      const Eigen::Matrix<double, 6, 1> delta = a.ldlt().solve(-n.jtr);
      if (!delta.allFinite()) break;
      step_norm = delta.norm();
      const Pose candidate = apply_update(out.pose, delta);
      const double next = cost(candidate, c, k);
      if (next <= current) {
        out.pose = candidate;
        current = next;
        out.cost_history.push_back(current);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
      if (step_norm < 1e-10) break;
    }
    if (!accepted || step_norm < 1e-10) break;
  }
  return out;
}

Pose refine_gn(const Pose& initial, std::span<const Correspondence2D3D> c, const Intrinsics& k, int max_iters) {
  return refine_gn_detailed(initial, c, k, max_iters).pose;
}

}  // namespace vl
