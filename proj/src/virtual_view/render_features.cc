#include <cmath>

#include "vl/common/error.h"
#include "vl/distill/distill.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl {

namespace {

// Bilinear interpolation of a cell-centered output grid at pixel (u, v),
// restricted to mask cells with the weights renormalized. False when no
// mask cell neighbours the point.
bool interpolate(const std::vector<double>& grid, const std::vector<std::uint8_t>& mask, int cols, int rows,
                 std::size_t n, double u, double v, std::span<float> out) {
  const double gx = (u - 0.5 * (kGridStride - 1)) / kGridStride;
  const double gy = (v - 0.5 * (kGridStride - 1)) / kGridStride;
  const int x0 = static_cast<int>(std::floor(gx)), y0 = static_cast<int>(std::floor(gy));
  const double fx = gx - x0, fy = gy - y0;
  std::vector<double> acc(n, 0.0);
  double total = 0;
  for (int dy = 0; dy <= 1; ++dy) {
    for (int dx = 0; dx <= 1; ++dx) {
      const int cx = x0 + dx, cy = y0 + dy;
      if (cx < 0 || cy < 0 || cx >= cols || cy >= rows) continue;
      const std::size_t c = static_cast<std::size_t>(cy) * cols + cx;
      if (!mask[c]) continue;
      const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      if (wgt <= 0) continue;
      for (std::size_t i = 0; i < n; ++i) acc[i] += wgt * grid[c * n + i];
      total += wgt;
    }
  }
  if (total <= 0) return false;
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(acc[i] / total);
  return true;
}

}  // namespace

VirtualFeatures render_features(const ProjectedView& v, FeatureMode mode, const StudentParams* student, double p,
                                FeatureRequest request) {
  if (mode == FeatureMode::distilled && student == nullptr) {
    throw Error(ErrorCode::missing_student, "distilled mode requires a student checkpoint");
  }
  const DescriptorGrid& fg = v.feature_grid;
  if (fg.valid_count() == 0) throw Error(ErrorCode::empty_mask, "no projected feature cells");

  VirtualFeatures out;
  out.pose = v.pose;
  out.renderer_tag = mode;
  out.local.dim = fg.dim;

  const auto n = static_cast<std::size_t>(fg.dim);
  if (mode == FeatureMode::deterministic) {
    if (request.global) out.global = global_descriptor(fg, p);
    if (request.local) {
      std::vector<float> desc(n);
      for (std::size_t i = 0; i < v.keypoints.size(); ++i) {
        const auto src = v.keypoint_descriptor(i);
        std::copy(src.begin(), src.end(), desc.begin());
        normalize(desc);
        const ProjectedKeypoint& kp = v.keypoints[i];
        out.local.push_back({static_cast<float>(kp.pixel.x()), static_cast<float>(kp.pixel.y()), 0.0f}, desc);
        out.world_points.push_back(kp.world);
        out.point_keys.push_back(point_key(kp.source_id, kp.source_index));
      }
    }
    return out;
  }

  if (student->descriptor_dim() != fg.dim) throw Error(ErrorCode::shape_mismatch, "student descriptor dimension");
  const StudentInputs in = student_inputs(v, p);
  if (request.global) {
    const std::vector<double> g = student_global(*student, in);
    out.global.values.assign(g.begin(), g.end());
    normalize(out.global.values);
  }
  if (request.local) {
    const std::vector<double> grid = student_local(*student, in);
    std::vector<float> desc(n);
    for (std::size_t i = 0; i < v.keypoints.size(); ++i) {
      const ProjectedKeypoint& kp = v.keypoints[i];
      if (!interpolate(grid, in.mask, in.cols, in.rows, n, kp.pixel.x(), kp.pixel.y(), desc)) {
        const auto src = v.keypoint_descriptor(i);
        std::copy(src.begin(), src.end(), desc.begin());
      }
      if (normalize(desc) == 0.0) continue;
      out.local.push_back({static_cast<float>(kp.pixel.x()), static_cast<float>(kp.pixel.y()), 0.0f}, desc);
      out.world_points.push_back(kp.world);
      out.point_keys.push_back(point_key(kp.source_id, kp.source_index));
    }
  }
  return out;
}

}  // namespace vl
