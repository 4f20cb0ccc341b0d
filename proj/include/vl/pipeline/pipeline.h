#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vl/distill/distill.h"
#include "vl/matching/matching.h"
#include "vl/pose_solver/pose_solver.h"
#include "vl/retrieval/retrieval.h"
#include "vl/scene_db/scene_db.h"
#include "vl/virtual_view/virtual_view.h"

namespace vl {

enum class OffsetDirection { front, back, left, right };

std::string_view to_string(OffsetDirection d);
/// Throws InvalidParams for an unknown label.
OffsetDirection parse_offset_direction(std::string_view label);

/// Which keyframes feed a rendered view and how it is judged.
struct ViewParams {
  std::size_t num_sources = 4;
  double rotation_weight = 1.0;  // meters per radian in the source ranking
  RenderParams render;
  double min_coverage = 0.2;
  std::size_t min_keypoints = 50;
  double gem_p = 3.0;
  /// Drop virtual centers that some keyframe sees behind an observed surface.
  bool free_space_check = true;
  double free_space_margin = 0.05;  // meters
};

struct AugmentationParams {
  std::vector<OffsetDirection> offsets = {OffsetDirection::front, OffsetDirection::back, OffsetDirection::left,
                                          OffsetDirection::right};
  double offset_distance = 2.5;  // meters
  int yaw_steps = 12;
  double yaw_increment = 30.0;  // degrees
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  ViewParams view;
};

/// Offsets in each seed camera's horizontal frame, then yaw_steps headings
/// about `up`, for every keyframe in id order. Poses within 1 cm and 1
/// degree of an earlier one are dropped. Throws InvalidParams.
std::vector<Pose> generate_augmentation_grid(const SceneDatabase& db, const AugmentationParams& params);

/// False when some keyframe observes a surface in front of `center` along
/// its line of sight by more than `margin`.
bool in_free_space(const SceneDatabase& db, const Eigen::Vector3d& center, double margin = 0.05);

/// A valid virtual view. Local features are re-rendered on demand from the
/// stored pose and sources, which is cheap and deterministic.
struct VirtualRecord {
  Pose pose;
  std::vector<KeyframeId> sources;
  double coverage = 0;
  GlobalDescriptor global;
  bool operator==(const VirtualRecord&) const = default;
};

class VirtualViewStore {
 public:
  Intrinsics intrinsics;
  RenderParams render;
  double gem_p = 3.0;
  FeatureMode mode = FeatureMode::deterministic;  // of the stored global descriptors
  std::vector<VirtualRecord> records;

  std::size_t size() const { return records.size(); }

  /// Local features of record i. Throws when the record no longer renders.
  VirtualFeatures local_features(const SceneDatabase& db, std::size_t i, FeatureMode local_mode,
                                 const StudentParams* student) const;

  /// "VLVF" u32 version, intrinsics, render params, u8 mode, u32 count, then
  /// per record pose, sources, coverage and global descriptor.
  std::vector<std::uint8_t> encode() const;
  static VirtualViewStore decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static VirtualViewStore load(const std::filesystem::path& path);

  bool operator==(const VirtualViewStore&) const = default;
};

struct AugmentedIndex {
  RetrievalIndex index;
  VirtualViewStore store;
  std::size_t grid_size = 0;
  std::size_t rejected_free_space = 0;
  std::size_t rejected_validity = 0;
};

/// Renders every grid pose, keeps the valid ones and indexes reals plus
/// virtuals under one whitening.
AugmentedIndex augment_database(const SceneDatabase& db, std::span<const Pose> grid, const ViewParams& params,
                                FeatureMode mode = FeatureMode::deterministic,
                                const StudentParams* student = nullptr, int whiten_dims = 0);

/// Reals only.
RetrievalIndex build_real_index(const SceneDatabase& db, int whiten_dims = 0);

/// Nearest keyframes for rendering a view at `pose`.
std::vector<KeyframeId> view_sources(const SceneDatabase& db, const Pose& pose, const ViewParams& params);

struct LocalizeParams {
  std::size_t top_k = 40;
  double ratio = 0.8;
  RansacParams ransac;
  bool refine = true;
  int refine_iters = 1;
  /// Local features of virtual views, both for matching and refinement.
  FeatureMode local_mode = FeatureMode::deterministic;
  /// Query descriptors matched against virtual entries; false keeps only
  /// real entries in the correspondence pool.
  bool virtual_local = true;
  ViewParams view;
  FeatureParams features;
  std::uint64_t seed = 0;
};

struct QueryFeatures {
  LocalFeatureSet local;
  GlobalDescriptor global;
};

/// Keeps the first correspondence per (query keypoint, keyframe keypoint)
/// pair, so views rendered from the same sources do not vote twice.
std::vector<Correspondence2D3D> unique_correspondences(std::span<const Correspondence2D3D> pooled);

QueryFeatures extract_query(const ColorImage& image, const FeatureParams& params);

struct RetrievedEntry {
  std::uint32_t id = 0;
  EntryKind kind = EntryKind::real;
  std::uint32_t ref = 0;
  double distance = 0;
  bool operator==(const RetrievedEntry&) const = default;
};

struct Timings {
  double extract_ms = 0, coarse_ms = 0, refine_ms = 0;
};

struct CoarseResult {
  PoseEstimate estimate;
  std::vector<RetrievedEntry> retrieved;
  std::vector<Correspondence2D3D> pooled;
};

struct LocalizationResult {
  std::uint32_t query_id = 0;
  PoseEstimate coarse;
  std::optional<PoseEstimate> refined;
  std::vector<RetrievedEntry> retrieved;
  std::size_t pooled = 0;
  Timings timings;

  /// Refined when present and ok, else coarse.
  const PoseEstimate& final_estimate() const { return refined && refined->ok() ? *refined : coarse; }
};

struct QueryInput {
  std::uint32_t id = 0;
  ColorImage image;
};

/// Read-only view of a prepared scene; safe to share between threads.
class Localizer {
 public:
  Localizer(const SceneDatabase& db, const RetrievalIndex& index, const VirtualViewStore* store,
            const Intrinsics& query_intrinsics, LocalizeParams params, const StudentParams* student = nullptr);

  /// Retrieval, matching against every retrieved entry, one pooled RANSAC.
  /// Throws EmptyCorpus; solver failures become a failed estimate.
  CoarseResult localize_coarse(std::uint32_t query_id, const QueryFeatures& query) const;

  /// Re-render at the coarse pose and solve again on local features only.
  /// Returns `coarse` unchanged whenever that does not work out.
  PoseEstimate refine_with_virtual_view(std::uint32_t query_id, const QueryFeatures& query,
                                        const PoseEstimate& coarse) const;

  LocalizationResult localize(std::uint32_t query_id, const ColorImage& image) const;
  /// Parallel over queries, output in input order.
  std::vector<LocalizationResult> localize_batch(std::span<const QueryInput> queries) const;

  const LocalizeParams& params() const { return params_; }

 private:
  const SceneDatabase& db_;
  const RetrievalIndex& index_;
  const VirtualViewStore* store_;
  Intrinsics k_;
  LocalizeParams params_;
  const StudentParams* student_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::uint32_t, std::shared_ptr<const VirtualFeatures>> cache_;

  std::shared_ptr<const VirtualFeatures> virtual_local(std::uint32_t ref) const;
};

/// One JSON object per line.
std::string result_json(const LocalizationResult& r, bool include_timings = true);
void write_results(const std::filesystem::path& path, std::span<const LocalizationResult> results,
                   bool include_timings = true);

/// The fields of a results line needed for evaluation.
struct ResultRecord {
  std::uint32_t query_id = 0;
  bool ok = false;
  Pose pose;
};

std::vector<ResultRecord> read_results(const std::filesystem::path& path);
std::vector<ResultRecord> to_records(std::span<const LocalizationResult> results);

struct GroundTruth {
  std::uint32_t query_id = 0;
  Pose pose;
};

/// "query_id,pose" header, then one line per query.
void write_ground_truth(const std::filesystem::path& path, std::span<const GroundTruth> gts);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

}  // namespace vl
