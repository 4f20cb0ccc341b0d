#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_map>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl {

namespace {

constexpr float kEmpty = std::numeric_limits<float>::infinity();

// x_target = rotation * x_source_cam + translation
struct Relative {
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
};

Relative relative(const Pose& source, const Pose& target) {
  Relative r;
  r.rotation = target.rotation * source.rotation.transpose();
  r.translation = target.translation - r.rotation * source.translation;
  return r;
}

Eigen::Vector3d source_point(const Intrinsics& k, double x, double y, double d) {
  return {d * (x - k.cx) / k.fx, d * (y - k.cy) / k.fy, d};
}

bool to_pixel(const Intrinsics& k, const Eigen::Vector3d& xc, double& u, double& v) {
  if (!(xc.z() > 1e-9)) return false;
  u = k.fx * xc.x() / xc.z() + k.cx;
  v = k.fy * xc.y() / xc.z() + k.cy;
  return std::isfinite(u) && std::isfinite(v);
}

bool round_pixel(double u, double v, int w, int h, int& px, int& py) {
  if (u < -1.0 || v < -1.0 || u > w || v > h) return false;
  px = static_cast<int>(std::lround(u));
  py = static_cast<int>(std::lround(v));
  return px >= 0 && py >= 0 && px < w && py < h;
}

std::vector<KeyframeId> sorted_unique(std::span<const KeyframeId> ids) {
  std::vector<KeyframeId> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

std::vector<SplatCandidate> splat_candidates(const SceneDatabase& db, const Pose& target, const Intrinsics& k,
                                             std::span<const KeyframeId> sources) {
  std::vector<SplatCandidate> out;
  for (const KeyframeId id : sorted_unique(sources)) {
    const Keyframe& kf = db.keyframe(id);
    const Relative rel = relative(kf.pose, target);
    for (int y = 0; y < kf.depth.height(); ++y) {
      for (int x = 0; x < kf.depth.width(); ++x) {
        const double d = kf.depth(x, y);
        if (!(d > 0)) continue;
        const Eigen::Vector3d xt = rel.rotation * source_point(kf.intrinsics, x, y, d) + rel.translation;
        double u, v;
        int px, py;
        if (!to_pixel(k, xt, u, v) || !round_pixel(u, v, k.width, k.height, px, py)) continue;
        out.push_back({id, x, y, px, py, xt.z()});
      }
    }
  }
  return out;
}

Grid<float> splat_zbuffer(std::span<const SplatCandidate> candidates, int width, int height) {
  Grid<float> z(width, height, kEmpty);
  for (const SplatCandidate& c : candidates) {
    const auto d = static_cast<float>(c.depth);
    if (d < z(c.tx, c.ty)) z(c.tx, c.ty) = d;
  }
  return z;
}

std::vector<std::uint8_t> occlusion_survivors(std::span<const SplatCandidate> candidates, const Grid<float>& zbuffer,
                                              double tolerance) {
  std::vector<std::uint8_t> keep(candidates.size(), 0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const SplatCandidate& c = candidates[i];
    keep[i] = static_cast<float>(c.depth) <= zbuffer(c.tx, c.ty) + tolerance ? 1 : 0;
  }
  return keep;
}

ProjectedView render_projection(const SceneDatabase& db, const Pose& target, const Intrinsics& k,
                                std::span<const KeyframeId> sources, const RenderParams& params) {
  if (sources.empty()) throw Error(ErrorCode::no_sources, "render_projection needs at least one source");
  if (!k.valid()) throw Error(ErrorCode::dimension_mismatch, "invalid target intrinsics");
  const int w = k.width, h = k.height;
  const double tau = params.occlusion_tolerance;

  ProjectedView v;
  v.pose = target;
  v.intrinsics = k;
  v.color_grid = ColorImage(w, h);
  v.zbuffer = Grid<float>(w, h, kEmpty);
  v.source_ids = sorted_unique(sources);

  // Pass 1: z-buffer and color. Candidates arrive in (source id, raster)
  // order and only a strictly smaller depth replaces the current winner, so
  // ties resolve to the smaller source id, then the earlier source pixel.
  const std::vector<SplatCandidate> candidates = splat_candidates(db, target, k, v.source_ids);
  for (const SplatCandidate& c : candidates) {
    const auto d = static_cast<float>(c.depth);
    if (d < v.zbuffer(c.tx, c.ty)) {
      v.zbuffer(c.tx, c.ty) = d;
      v.color_grid(c.tx, c.ty) = db.keyframe(c.source_id).image(c.sx, c.sy);
    }
  }
  auto passes = [&](double depth, int px, int py) {
    return static_cast<float>(depth) <= v.zbuffer(px, py) + tau;
  };

  // Pass 2: descriptor-grid cells, winner-take-all by depth per target cell.
  int dim = kDescriptorDim;
  for (const KeyframeId id : v.source_ids) {
    const Keyframe& kf = db.keyframe(id);
    if (kf.descriptor_grid) dim = kf.descriptor_grid->dim;
    break;
  }
  v.feature_grid = DescriptorGrid(w / kGridStride, h / kGridStride, dim);
  std::vector<double> cell_depth(v.feature_grid.valid.size(), std::numeric_limits<double>::infinity());
  for (const KeyframeId id : v.source_ids) {
    const Keyframe& kf = db.keyframe(id);
    const DescriptorGrid grid = kf.descriptor_grid ? *kf.descriptor_grid : describe_grid(kf.image);
    if (grid.dim != dim) throw Error(ErrorCode::dimension_mismatch, "descriptor grids disagree in dimension");
    const Relative rel = relative(kf.pose, target);
    for (int cy = 0; cy < grid.rows; ++cy) {
      for (int cx = 0; cx < grid.cols; ++cx) {
        if (!grid.is_valid(cx, cy)) continue;
        const Eigen::Vector2d c = DescriptorGrid::cell_center(cx, cy);
        const auto d = sample_depth(kf.depth, c.x(), c.y());
        if (!d) continue;
        const Eigen::Vector3d xt = rel.rotation * source_point(kf.intrinsics, c.x(), c.y(), *d) + rel.translation;
        double u, vv;
        int px, py;
        if (!to_pixel(k, xt, u, vv) || !round_pixel(u, vv, w, h, px, py) || !passes(xt.z(), px, py)) continue;
        const int tcx = px / kGridStride, tcy = py / kGridStride;
        if (tcx >= v.feature_grid.cols || tcy >= v.feature_grid.rows) continue;
        const std::size_t ci = v.feature_grid.cell_index(tcx, tcy);
        if (xt.z() < cell_depth[ci]) {
          cell_depth[ci] = xt.z();
          const auto src = grid.cell(cx, cy);
          std::copy(src.begin(), src.end(), v.feature_grid.cell(tcx, tcy).begin());
          v.feature_grid.valid[ci] = 1;
        }
      }
    }
  }

  // Pass 3: keypoints, in caller order (nearest source first).
  const double r = params.keypoint_dedup_radius;
  const double cell = std::max(r, 1.0);
  std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets;
  auto bucket_key = [&](long bx, long by) { return static_cast<std::int64_t>(by) * 1000003LL + bx; };
  auto crowded = [&](const Eigen::Vector2d& p) {
    if (r <= 0) return false;
    const long bx = static_cast<long>(std::floor(p.x() / cell)), by = static_cast<long>(std::floor(p.y() / cell));
    for (long dy = -1; dy <= 1; ++dy) {
      for (long dx = -1; dx <= 1; ++dx) {
        const auto it = buckets.find(bucket_key(bx + dx, by + dy));
        if (it == buckets.end()) continue;
        for (const std::size_t j : it->second) {
          if ((v.keypoints[j].pixel - p).norm() < r) return true;
        }
      }
    }
    return false;
  };

  std::vector<KeyframeId> order;
  for (const KeyframeId id : sources) {
    if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
  }
  for (const KeyframeId id : order) {
    const Keyframe& kf = db.keyframe(id);
    const LocalFeatureSet local = kf.local_features ? *kf.local_features : extract_local(kf.image);
    if (local.dim != dim) throw Error(ErrorCode::dimension_mismatch, "local descriptors disagree in dimension");
    for (std::size_t i = 0; i < local.size(); ++i) {
      const Keypoint& kp = local.keypoints[i];
      const auto d = sample_depth(kf.depth, kp.x, kp.y);
      if (!d) continue;
      const Eigen::Vector3d world = backproject(kf.intrinsics, kf.pose, {kp.x, kp.y}, *d);
      const Eigen::Vector3d xt = target.to_camera(world);
      double u, vv;
      int px, py;
      if (!to_pixel(k, xt, u, vv) || u < 0 || vv < 0 || u > w - 1 || vv > h - 1) continue;
      if (!round_pixel(u, vv, w, h, px, py) || !passes(xt.z(), px, py)) continue;
      const Eigen::Vector2d pixel(u, vv);
      if (crowded(pixel)) continue;
      const std::size_t idx = v.keypoints.size();
      v.keypoints.push_back({id, static_cast<std::uint32_t>(i), pixel, xt.z(), world});
      const auto desc = local.descriptor(i);
      v.keypoint_descriptors.insert(v.keypoint_descriptors.end(), desc.begin(), desc.end());
      if (r > 0) {
        buckets[bucket_key(static_cast<long>(std::floor(u / cell)), static_cast<long>(std::floor(vv / cell)))]
            .push_back(idx);
      }
    }
  }
  return v;
}

Validity validity(const ProjectedView& v, double min_coverage, std::size_t min_keypoints) {
  const std::size_t total = v.zbuffer.data().size();
  if (total == 0) return {false, 0.0};
  std::size_t filled = 0;
  for (const float z : v.zbuffer.data()) filled += std::isfinite(z) ? 1 : 0;
  const double coverage = static_cast<double>(filled) / static_cast<double>(total);
  return {filled > 0 && coverage >= min_coverage && v.keypoints.size() >= min_keypoints, coverage};
}

void write_debug_dump(const ProjectedView& v, const std::filesystem::path& prefix) {
  const std::string base = prefix.string();
  write_ppm(base + "_color.ppm", v.color_grid);
  write_depth(base + "_zbuffer.f32", v.zbuffer);
  std::string csv = "source_id,kp_index,x,y,X,Y,Z\n";
  char line[256];
  for (const ProjectedKeypoint& kp : v.keypoints) {
    std::snprintf(line, sizeof line, "%u,%u,%.6f,%.6f,%.9g,%.9g,%.9g\n", kp.source_id, kp.source_index, kp.pixel.x(),
                  kp.pixel.y(), kp.world.x(), kp.world.y(), kp.world.z());
    csv += line;
  }
  io::write_text(base + "_keypoints.csv", csv);
}

}  // namespace vl
