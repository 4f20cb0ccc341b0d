#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vl/common/image.h"
#include "vl/features/features.h"
#include "vl/geometry/geometry.h"
#include "vl/scene_db/scene_db.h"

namespace vl {

struct StudentParams;

struct ProjectedKeypoint {
  KeyframeId source_id = 0;
  std::uint32_t source_index = 0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();  // target image, sub-pixel
  double depth = 0;                                 // target camera z
  Eigen::Vector3d world = Eigen::Vector3d::Zero();

  bool operator==(const ProjectedKeypoint&) const = default;
};

/// Everything forward-projected from real keyframes into a novel viewpoint.
/// Empty pixels have color 0 and zbuffer +inf; cells outside the mask are
/// zero (feature_grid.valid is the mask).
struct ProjectedView {
  Pose pose;
  Intrinsics intrinsics;
  ColorImage color_grid;
  Grid<float> zbuffer;
  DescriptorGrid feature_grid;
  std::vector<ProjectedKeypoint> keypoints;
  std::vector<float> keypoint_descriptors;  // row-major, feature_grid.dim per keypoint
  std::vector<KeyframeId> source_ids;

  bool filled(int x, int y) const { return std::isfinite(zbuffer(x, y)); }
  std::span<const float> keypoint_descriptor(std::size_t i) const {
    const auto d = static_cast<std::size_t>(feature_grid.dim);
    return {keypoint_descriptors.data() + i * d, d};
  }

  bool operator==(const ProjectedView&) const = default;
};

struct RenderParams {
  double occlusion_tolerance = 0.05;  // meters
  /// Projected keypoints closer than this (pixels) to an already accepted
  /// one are dropped; sources earlier in the list win. 0 disables.
  double keypoint_dedup_radius = 2.0;

  bool operator==(const RenderParams&) const = default;
};

/// One source pixel forward-projected to an integer target pixel.
struct SplatCandidate {
  KeyframeId source_id = 0;
  int sx = 0, sy = 0;  // source pixel
  int tx = 0, ty = 0;  // target pixel
  double depth = 0;    // target camera z
};

/// Every valid-depth pixel of every source (ascending id, raster order)
/// that lands inside the target image in front of the camera.
std::vector<SplatCandidate> splat_candidates(const SceneDatabase& db, const Pose& target, const Intrinsics& k,
                                             std::span<const KeyframeId> sources);

/// Z-buffer over the candidates: zbuffer(p) = min depth landing on p.
Grid<float> splat_zbuffer(std::span<const SplatCandidate> candidates, int width, int height);

/// Candidates whose depth is within `tolerance` of the z-buffer at their pixel.
std::vector<std::uint8_t> occlusion_survivors(std::span<const SplatCandidate> candidates, const Grid<float>& zbuffer,
                                              double tolerance);

/// Throws NoSources. A target that sees nothing yields the all-zero view
/// (validity() reports it invalid). Sources lacking features get them
/// computed on the fly.
ProjectedView render_projection(const SceneDatabase& db, const Pose& target, const Intrinsics& k,
                                std::span<const KeyframeId> sources, const RenderParams& params = {});

struct Validity {
  bool valid = false;
  double coverage = 0;  // fraction of pixels with finite zbuffer
};

Validity validity(const ProjectedView& v, double min_coverage = 0.2, std::size_t min_keypoints = 50);

enum class FeatureMode { deterministic, distilled };

/// Identifies a keypoint of a real keyframe: id in the high word, keypoint
/// index in the low word.
inline std::uint64_t point_key(KeyframeId id, std::uint32_t index) {
  return (static_cast<std::uint64_t>(id) << 32) | index;
}

/// Global and local features of a virtual viewpoint; world_points[i] and
/// point_keys[i] belong to local.keypoints[i].
struct VirtualFeatures {
  Pose pose;
  GlobalDescriptor global;
  LocalFeatureSet local;
  std::vector<Eigen::Vector3d> world_points;
  std::vector<std::uint64_t> point_keys;
  FeatureMode renderer_tag = FeatureMode::deterministic;
};

struct FeatureRequest {
  bool global = true;
  bool local = true;
};

/// Deterministic: global = GeM over mask cells of the feature grid, local =
/// projected keypoints with their projected descriptors. Distilled: student
/// outputs (global from pooled inputs, local interpolated at the projected
/// keypoints). Throws EmptyMask, MissingStudent.
VirtualFeatures render_features(const ProjectedView& v, FeatureMode mode, const StudentParams* student = nullptr,
                                double p = 3.0, FeatureRequest request = {});

/// Writes <prefix>_color.ppm, <prefix>_zbuffer.f32 (inf where empty) and
/// <prefix>_keypoints.csv (source_id,kp_index,x,y,X,Y,Z).
void write_debug_dump(const ProjectedView& v, const std::filesystem::path& prefix);

}  // namespace vl
