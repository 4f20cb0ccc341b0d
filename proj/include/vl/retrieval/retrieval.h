#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "vl/features/features.h"
#include "vl/geometry/geometry.h"
#include "vl/scene_db/scene_db.h"

namespace vl {

enum class EntryKind : std::uint8_t { real = 0, virtual_view = 1 };

std::string_view to_string(EntryKind kind);

/// Unwhitened global descriptor with its provenance. `ref` is the keyframe
/// id for real entries and the virtual store index for virtual ones.
struct RawEntry {
  EntryKind kind = EntryKind::real;
  std::uint32_t ref = 0;
  Pose pose;
  std::vector<float> global;
};

struct IndexEntry {
  std::uint32_t id = 0;  // position in the index
  EntryKind kind = EntryKind::real;
  std::uint32_t ref = 0;
  Pose pose;
  bool operator==(const IndexEntry&) const = default;
};

struct Ranked {
  std::uint32_t id = 0;
  double distance = 0;
  bool operator==(const Ranked&) const = default;
};

/// Immutable exhaustive-scan index over whitened, unit-norm descriptors.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;

  /// Whitening is fitted on all entries together, then applied to each.
  /// A single entry gets the identity transform. Throws EmptyCorpus.
  static RetrievalIndex build(std::span<const RawEntry> entries, int keep_dims = 0);

  /// k smallest Euclidean distances after whitening `raw_global`, ascending,
  /// ties by ascending id. Throws EmptyCorpus.
  std::vector<Ranked> query_topk(std::span<const float> raw_global, std::size_t k) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  int dim() const { return dim_; }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const IndexEntry& entry(std::uint32_t id) const { return entries_.at(id); }
  std::span<const float> descriptor(std::uint32_t id) const {
    return {descriptors_.data() + static_cast<std::size_t>(id) * dim_, static_cast<std::size_t>(dim_)};
  }
  const WhiteningTransform& whitening() const { return whitening_; }
  /// Whitened and normalized.
  std::vector<float> transform(std::span<const float> raw_global) const;

  /// "VLIX" u32 m, u32 count, whitening (u32 in, u32 out, f64 mean, f64
  /// projection), then per entry u32 id, u8 kind, u32 ref, 12 x f64 pose,
  /// m x f32 descriptor.
  std::vector<std::uint8_t> encode() const;
  static RetrievalIndex decode(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static RetrievalIndex load(const std::filesystem::path& path);

  bool operator==(const RetrievalIndex&) const = default;

 private:
  int dim_ = 0;
  WhiteningTransform whitening_;
  std::vector<IndexEntry> entries_;
  std::vector<float> descriptors_;
};

/// One real entry per keyframe with a global feature.
std::vector<RawEntry> real_entries(const SceneDatabase& db);

}  // namespace vl
