#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "vl/common/image.h"
#include "vl/geometry/geometry.h"
#include "vl/scene_db/scene_db.h"

namespace vl::synth {

struct PaintedRect {
  double s0 = 0, t0 = 0, s1 = 0, t1 = 0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

/// Planar textured rectangle: point = origin + s * u + t * v with
/// s in [0, s_extent], t in [0, t_extent]; u, v unit and orthogonal.
struct Surface {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d u = Eigen::Vector3d::UnitX();
  Eigen::Vector3d v = Eigen::Vector3d::UnitY();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // facing the free space
  double s_extent = 1, t_extent = 1;
  Eigen::Vector3d base_color = Eigen::Vector3d::Constant(0.5);
  std::uint64_t texture_seed = 0;
  std::vector<PaintedRect> rects;
};

struct Box {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

struct RayHit {
  double t = 0;  // ray parameter; equals z-depth for rays built by camera_ray
  int surface = -1;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

/// Axis-aligned room (viewed from inside) plus solid axis-aligned boxes.
/// Surfaces 0..5 are the room faces (-x, +x, -y, +y, -z, +z), then six per
/// box in the same order.
class SceneGeometry {
 public:
  Eigen::Vector3d room_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d room_hi = Eigen::Vector3d::Zero();
  std::vector<Box> boxes;
  std::vector<Surface> surfaces;

  /// Nearest hit with t > 1e-12. The origin must lie inside the room.
  std::optional<RayHit> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  Eigen::Vector3d albedo(const RayHit& hit) const;
  /// Lambertian: albedo * (ambient + diffuse * max(0, n.l)), one directional light.
  Eigen::Vector3d shade(const RayHit& hit) const;
  /// Inside the room and outside every box, with clearance `margin`.
  bool is_free(const Eigen::Vector3d& p, double margin = 0.0) const;
};

/// Builds room + box surfaces with seeded textures.
SceneGeometry make_geometry(const Eigen::Vector3d& room_size, const std::vector<Box>& boxes, std::uint64_t seed,
                            double rect_density = 8.0);

/// World-space ray through a pixel whose parameter t is the camera z-depth.
Eigen::Vector3d camera_ray(const Intrinsics& k, const Pose& pose, const Eigen::Vector2d& pixel);

/// Camera z-depth of the first surface seen through `pixel` (double precision).
std::optional<double> exact_depth(const SceneGeometry& g, const Intrinsics& k, const Pose& pose,
                                  const Eigen::Vector2d& pixel);

struct RenderedView {
  ColorImage image;
  DepthMap depth;  // center-ray depth rounded to f32
};

/// 2x2 supersampled color, center-ray depth.
RenderedView render_view(const SceneGeometry& g, const Intrinsics& k, const Pose& pose);

/// Fraction of sampled query pixels whose surface point is visible in the
/// other view (inside its image and not occluded).
double frustum_overlap(const SceneGeometry& g, const Intrinsics& k, const Pose& query, const Pose& other,
                       int samples = 1000);

/// Horizontal-looking camera with the given yaw/pitch (radians) in a z-up world.
Pose camera_pose(const Eigen::Vector3d& center, double yaw, double pitch = 0.0);

enum class OverlapRegime { high, low };

struct SceneParams {
  Eigen::Vector3d room_size{10.0, 8.0, 3.0};
  int num_db = 50;
  int num_queries = 40;
  OverlapRegime regime = OverlapRegime::low;
  int num_boxes = 5;
  Intrinsics intrinsics{110.0, 110.0, 79.5, 59.5, 160, 120};
  double rect_density = 8.0;        // painted rectangles per square meter
  double min_overlap = 0.1;         // low regime: best overlap in [min, max)
  double max_overlap = 0.4;
  int overlap_samples = 1000;
  double camera_height = 1.5;
  double db_yaw_jitter_deg = 35.0;
};

struct QueryRecord {
  std::uint32_t id = 0;
  ColorImage image;
  DepthMap depth;
  Pose pose;
  double best_overlap = 0;
  KeyframeId best_keyframe = 0;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  SceneParams params;
  SceneGeometry geometry;
  SceneDatabase db;
  std::vector<QueryRecord> queries;
};

/// Deterministic in (seed, params). Database cameras follow a loop through
/// the room; low-regime queries are rejection-sampled so that their best
/// database overlap lies in [min_overlap, max_overlap). Throws InvalidParams.
SyntheticScene generate_scene(std::uint64_t seed, const SceneParams& params = {});

}  // namespace vl::synth
