#include "vl/matching/matching.h"

#include <cmath>
#include <cstdio>
#include <limits>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/simd/kernels.h"

namespace vl {

namespace {

struct Nearest {
  std::uint32_t index = 0;
  double best = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();

  void offer(std::uint32_t j, double d) {
    if (d < best) {
      second = best;
      best = d;
      index = j;
    } else if (d < second) {
      second = d;
    }
  }
};

}  // namespace

MatchSet match_descriptors(const LocalFeatureSet& a, const LocalFeatureSet& b, double ratio,
                           std::uint32_t reference_id) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::empty_feature_set, "cannot match an empty feature set");
  if (a.dim != b.dim) throw Error(ErrorCode::dimension_mismatch, "descriptor dimensions differ");
  const std::size_t na = a.size(), nb = b.size();
  const auto dim = static_cast<std::size_t>(a.dim);

  std::vector<double> dist(na * nb);
  for (std::size_t i = 0; i < na; ++i) {
    simd::squared_l2_rows(a.descriptor(i), b.descriptors, dim, {dist.data() + i * nb, nb});
  }
  for (double& d : dist) d = std::sqrt(d);

  std::vector<Nearest> row(na), col(nb);
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = dist[i * nb + j];
      row[i].offer(static_cast<std::uint32_t>(j), d);
      col[j].offer(static_cast<std::uint32_t>(i), d);
    }
  }

  MatchSet out;
  out.reference_id = reference_id;
  for (std::size_t i = 0; i < na; ++i) {
    const std::uint32_t j = row[i].index;
    if (col[j].index != i) continue;
    const double d = row[i].best;
    if (d <= ratio * row[i].second && d <= ratio * col[j].second) {
      out.pairs.push_back({static_cast<std::uint32_t>(i), j, d});
    }
  }
  return out;
}

std::vector<Correspondence2D3D> lift_correspondences(const MatchSet& matches, const LocalFeatureSet& query,
                                                     const Keyframe& reference) {
  const LocalFeatureSet* ref = reference.local_features ? &*reference.local_features : nullptr;
  if (ref == nullptr) throw Error(ErrorCode::empty_feature_set, "reference keyframe has no local features");
  std::vector<Correspondence2D3D> out;
  for (const Match& m : matches.pairs) {
    const Keypoint& rk = ref->keypoints.at(m.reference_index);
    const auto d = sample_depth(reference.depth, rk.x, rk.y);
    if (!d) continue;
    const Keypoint& qk = query.keypoints.at(m.query_index);
    out.push_back({{qk.x, qk.y}, backproject(reference.intrinsics, reference.pose, {rk.x, rk.y}, *d),
                   matches.reference_id, m.query_index, point_key(reference.id, m.reference_index)});
  }
  return out;
}

std::vector<Correspondence2D3D> lift_correspondences(const MatchSet& matches, const LocalFeatureSet& query,
                                                     const VirtualFeatures& reference) {
  std::vector<Correspondence2D3D> out;
  for (const Match& m : matches.pairs) {
    const Eigen::Vector3d& w = reference.world_points.at(m.reference_index);
    if (!w.allFinite()) continue;
    const Keypoint& qk = query.keypoints.at(m.query_index);
    const std::uint64_t key = m.reference_index < reference.point_keys.size() ? reference.point_keys[m.reference_index] : 0;
    out.push_back({{qk.x, qk.y}, w, matches.reference_id, m.query_index, key});
  }
  return out;
}

void write_match_dump(const std::filesystem::path& path, std::span<const Correspondence2D3D> corr,
                      std::span<const double> distances) {
  std::string csv = "query_x,query_y,X,Y,Z,ref_id,distance\n";
  char line[256];
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Correspondence2D3D& c = corr[i];
    std::snprintf(line, sizeof line, "%.6f,%.6f,%.9g,%.9g,%.9g,%u,%.9g\n", c.pixel.x(), c.pixel.y(), c.world.x(),
                  c.world.y(), c.world.z(), c.reference_id, i < distances.size() ? distances[i] : 0.0);
    csv += line;
  }
  io::write_text(path, csv);
}

}  // namespace vl
