#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vl/common/image.h"
#include "vl/features/features.h"
#include "vl/geometry/geometry.h"

namespace vl {

using KeyframeId = std::uint32_t;

inline constexpr std::uint32_t kSceneFormatVersion = 1;

struct Keyframe {
  KeyframeId id = 0;
  ColorImage image;
  DepthMap depth;
  Pose pose;
  Intrinsics intrinsics;
  std::optional<LocalFeatureSet> local_features;
  std::optional<GlobalDescriptor> global_feature;
  // Dense stride-8 descriptor field; derived from the image, never persisted.
  std::optional<DescriptorGrid> descriptor_grid;
};

struct FeatureParams {
  DetectorParams detector;
  double gem_p = 3.0;
};

/// Source-view selection. Distance = |C - C_target| + rotation_weight * angle(R, R_target).
struct NearestParams {
  std::size_t k = 4;
  double rotation_weight = 0.0;  // meters per radian
  std::optional<KeyframeId> exclude;
};

class SceneDatabase {
 public:
  std::string name = "scene";
  std::map<std::string, std::string> creation_params;

  /// Throws DimensionMismatch when image and depth sizes disagree with each
  /// other or with the intrinsics, or when any depth is negative / non-finite.
  KeyframeId ingest_keyframe(ColorImage image, DepthMap depth, const Pose& pose, const Intrinsics& intrinsics);

  std::size_t size() const { return keyframes_.size(); }
  bool empty() const { return keyframes_.empty(); }
  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  /// Throws UnknownKeyframe.
  const Keyframe& keyframe(KeyframeId id) const;
  Keyframe& keyframe(KeyframeId id);

  /// Ordered by ascending distance, ties by ascending id. Throws EmptyDatabase.
  std::vector<KeyframeId> nearest_keyframes(const Pose& target, const NearestParams& params = {}) const;

  /// Populates local, global and grid features for every keyframe missing them.
  void compute_features(const FeatureParams& params = {});
  /// Recomputes only the (non-persisted) descriptor grids.
  void compute_descriptor_grids();

  /// One directory per scene: manifest.json, images/<id>.ppm,
  /// depth/<id>.f32, features/<id>.feat, CRC32 per file in the manifest.
  void save(const std::filesystem::path& dir) const;
  /// Throws Io, FormatVersionMismatch or ChecksumMismatch.
  static SceneDatabase load(const std::filesystem::path& dir);

  /// Replaces a keyframe's features from an external `.feat` container.
  void import_features(KeyframeId id, const std::filesystem::path& feat_path);

 private:
  std::vector<Keyframe> keyframes_;
  std::map<KeyframeId, std::size_t> index_;
  KeyframeId next_id_ = 0;

  void insert(Keyframe kf);
};

/// Depth at a sub-pixel location. Bilinear in inverse depth when the four
/// neighbours are valid and agree within `tolerance` meters (exact on
/// planes), else the nearest pixel; nullopt when that pixel is invalid.
std::optional<double> sample_depth(const DepthMap& depth, double x, double y, double tolerance = 0.05);

/// `.f32` grid: "VLDP", u32 width, u32 height, u32 reserved, then row-major
/// little-endian f32.
std::vector<std::uint8_t> encode_depth(const DepthMap& depth);
DepthMap decode_depth(std::span<const std::uint8_t> bytes);
void write_depth(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth(const std::filesystem::path& path);

}  // namespace vl
