#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vl/geometry/geometry.h"
#include "vl/matching/matching.h"

namespace vl {

struct RansacParams {
  std::size_t max_iterations = 10000;
  double inlier_threshold = 3.0;  // pixels
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

enum class Stage { coarse, refined };
enum class Status { ok, failed };

std::string_view to_string(Stage stage);
std::string_view to_string(Status status);

struct PoseEstimate {
  Pose pose;
  std::vector<std::uint32_t> inliers;  // ascending
  std::size_t num_correspondences = 0;
  double mean_error = 0;  // pixels, over inliers
  Stage stage = Stage::coarse;
  Status status = Status::failed;
  std::string failure;  // reason when failed

  bool ok() const { return status == Status::ok; }
  static PoseEstimate failed_with(std::string reason, std::size_t num_correspondences = 0);
  bool operator==(const PoseEstimate&) const = default;
};

/// Pixel distance between the observation and the projected world point;
/// infinity when the point is not in front of the camera.
double reprojection_error(const Pose& pose, const Intrinsics& k, const Correspondence2D3D& c);

/// Minimal solver on exactly three correspondences (Kneip's closed form).
/// Every returned pose reprojects all three points within 1e-6 px.
/// Throws DegenerateConfiguration for collinear world points.
std::vector<Pose> p3p(std::span<const Correspondence2D3D> c, const Intrinsics& k);

/// Inliers of `pose` over all correspondences. Status ok with at least four.
PoseEstimate score_pose(const Pose& pose, std::span<const Correspondence2D3D> c, const Intrinsics& k,
                        double inlier_threshold, Stage stage = Stage::coarse);

/// P3P-RANSAC with an adaptive iteration bound, cheirality check and a
/// final Gauss-Newton polish. Throws TooFewCorrespondences (< 4) and
/// NoModelFound (no candidate with four inliers).
PoseEstimate ransac_pnp(std::span<const Correspondence2D3D> c, const Intrinsics& k, const RansacParams& params);

struct RefineResult {
  Pose pose;
  std::vector<double> cost_history;  // initial cost, then every accepted step
  int iterations = 0;
};

/// Levenberg-damped Gauss-Newton on the summed squared reprojection error,
/// updating x_cam <- exp(omega) x_cam + v. Stops when the step norm drops
/// below 1e-10 or after max_iters iterations.
RefineResult refine_gn_detailed(const Pose& initial, std::span<const Correspondence2D3D> c, const Intrinsics& k,
                                int max_iters = 50);
Pose refine_gn(const Pose& initial, std::span<const Correspondence2D3D> c, const Intrinsics& k, int max_iters = 50);

/// d(pixel)/d(omega, v) of one world point under the update above.
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& pose, const Intrinsics& k,
                                                  const Eigen::Vector3d& world);

/// The update used by refine_gn: exp(omega) applied after `pose`, then v.
Pose apply_update(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

}  // namespace vl
