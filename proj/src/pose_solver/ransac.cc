#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "vl/common/error.h"
#include "vl/common/rng.h"
#include "vl/pose_solver/pose_solver.h"

namespace vl {

std::string_view to_string(Stage stage) { return stage == Stage::coarse ? "coarse" : "refined"; }

std::string_view to_string(Status status) { return status == Status::ok ? "ok" : "failed"; }

PoseEstimate PoseEstimate::failed_with(std::string reason, std::size_t num_correspondences) {
  PoseEstimate e;
  e.status = Status::failed;
  e.failure = std::move(reason);
  e.num_correspondences = num_correspondences;
  return e;
}

PoseEstimate score_pose(const Pose& pose, std::span<const Correspondence2D3D> c, const Intrinsics& k,
                        double inlier_threshold, Stage stage) {
  PoseEstimate e;
  e.pose = pose;
  e.stage = stage;
  e.num_correspondences = c.size();
  double total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double err = reprojection_error(pose, k, c[i]);
    if (err <= inlier_threshold) {
      e.inliers.push_back(static_cast<std::uint32_t>(i));
      total += err;
    }
  }
  e.mean_error = e.inliers.empty() ? 0.0 : total / static_cast<double>(e.inliers.size());
  if (e.inliers.size() >= 4) {
    e.status = Status::ok;
  } else {
    e.failure = "fewer than four inliers";
  }
  return e;
}

namespace {

bool better(const PoseEstimate& a, const PoseEstimate& b) {
  return a.inliers.size() > b.inliers.size() ||
         (a.inliers.size() == b.inliers.size() && a.mean_error < b.mean_error);
}

std::size_t adaptive_bound(std::size_t inliers, std::size_t n, double confidence, std::size_t cap) {
  const double w = static_cast<double>(inliers) / static_cast<double>(n);
  const double miss = 1.0 - w * w * w;
  if (miss <= 0.0) return 1;
  if (miss >= 1.0) return cap;
  const double bound = std::ceil(std::log(1.0 - confidence) / std::log(miss));
  return bound >= static_cast<double>(cap) ? cap : std::max<std::size_t>(1, static_cast<std::size_t>(bound));
}

}  // namespace

PoseEstimate ransac_pnp(std::span<const Correspondence2D3D> c, const Intrinsics& k, const RansacParams& params) {
  if (c.size() < 4) throw Error(ErrorCode::too_few_correspondences, std::to_string(c.size()) + " correspondences");
  if (!(params.inlier_threshold > 0) || !(params.confidence > 0 && params.confidence < 1)) {
    throw Error(ErrorCode::invalid_params, "ransac threshold or confidence out of range");
  }
  const std::size_t n = c.size();
  SplitMix64 rng(params.seed);
  PoseEstimate best;
  best.mean_error = std::numeric_limits<double>::infinity();
  std::size_t bound = params.max_iterations;
  std::array<Correspondence2D3D, 3> sample;

  for (std::size_t it = 0; it < bound; ++it) {
    const std::size_t i0 = rng.index(n);
    std::size_t i1 = rng.index(n);
    while (i1 == i0) i1 = rng.index(n);
    std::size_t i2 = rng.index(n);
    while (i2 == i0 || i2 == i1) i2 = rng.index(n);
    sample = {c[i0], c[i1], c[i2]};

    std::vector<Pose> candidates;
    try {
      candidates = p3p(sample, k);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::degenerate_configuration) throw;
      continue;
    }
    for (const Pose& pose : candidates) {
      const bool in_front = std::all_of(sample.begin(), sample.end(),
                                        [&](const Correspondence2D3D& s) { return pose.to_camera(s.world).z() > 0; });
      if (!in_front) continue;
      PoseEstimate e = score_pose(pose, c, k, params.inlier_threshold);
      if (better(e, best)) {
        best = std::move(e);
        bound = std::min(params.max_iterations,
                         adaptive_bound(best.inliers.size(), n, params.confidence, params.max_iterations));
      }
    }
  }
  if (best.inliers.size() < 4) throw Error(ErrorCode::no_model_found, "no candidate reached four inliers");

  // Polish on the inliers; a round is kept only if it loses no inliers.
  for (int round = 0; round < 3; ++round) {
    std::vector<Correspondence2D3D> inl;
    inl.reserve(best.inliers.size());
    for (const std::uint32_t i : best.inliers) inl.push_back(c[i]);
    PoseEstimate polished = score_pose(refine_gn(best.pose, inl, k), c, k, params.inlier_threshold);
    if (polished.inliers.size() < best.inliers.size()) break;
    const bool grew = polished.inliers.size() > best.inliers.size();
    best = std::move(polished);
    if (!grew) break;
  }
  return best;
}

}  // namespace vl
