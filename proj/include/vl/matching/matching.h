#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "vl/features/features.h"
#include "vl/scene_db/scene_db.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl {

struct Match {
  std::uint32_t query_index = 0;
  std::uint32_t reference_index = 0;
  double distance = 0;
  bool operator==(const Match&) const = default;
};

struct MatchSet {
  std::uint32_t reference_id = 0;
  std::vector<Match> pairs;  // ascending query_index
};

struct Correspondence2D3D {
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Eigen::Vector3d world = Eigen::Vector3d::Zero();
  std::uint32_t reference_id = 0;
  std::uint32_t query_index = 0;
  std::uint64_t point = 0;  // point_key of the keyframe keypoint behind `world`
};

/// Mutual nearest neighbours passing the ratio test on both sides:
/// d(i,j) <= ratio * (second-nearest distance) for i in b and for j in a.
/// A missing second neighbour counts as infinitely far. Nearest-neighbour
/// ties go to the lower index. Throws EmptyFeatureSet.
MatchSet match_descriptors(const LocalFeatureSet& a, const LocalFeatureSet& b, double ratio = 0.8,
                           std::uint32_t reference_id = 0);

/// Reference keypoints are lifted through the keyframe depth map; matches
/// without valid depth are dropped.
std::vector<Correspondence2D3D> lift_correspondences(const MatchSet& matches, const LocalFeatureSet& query,
                                                     const Keyframe& reference);
/// Uses the stored world point of each virtual keypoint.
std::vector<Correspondence2D3D> lift_correspondences(const MatchSet& matches, const LocalFeatureSet& query,
                                                     const VirtualFeatures& reference);

/// query_x,query_y,X,Y,Z,ref_id,distance (distance per correspondence may be
/// supplied separately; empty span writes 0).
void write_match_dump(const std::filesystem::path& path, std::span<const Correspondence2D3D> corr,
                      std::span<const double> distances = {});

}  // namespace vl
