#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/common/parallel.h"
#include "vl/pipeline/pipeline.h"

namespace vl {

namespace {

constexpr std::uint32_t kStoreFormatVersion = 1;

bool near_duplicate(const Pose& a, const Eigen::Vector3d& ca, const Pose& b, const Eigen::Vector3d& cb) {
  if ((ca - cb).norm() >= 0.01) return false;
  const double cos_angle = std::clamp(((a.rotation * b.rotation.transpose()).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(cos_angle) < std::numbers::pi / 180.0;
}

}  // namespace

std::string_view to_string(OffsetDirection d) {
  switch (d) {
    case OffsetDirection::front: return "front";
    case OffsetDirection::back: return "back";
    case OffsetDirection::left: return "left";
    case OffsetDirection::right: return "right";
  }
  return "?";
}

OffsetDirection parse_offset_direction(std::string_view label) {
  for (const OffsetDirection d :
       {OffsetDirection::front, OffsetDirection::back, OffsetDirection::left, OffsetDirection::right}) {
    if (label == to_string(d)) return d;
  }
  throw Error(ErrorCode::invalid_params, "unknown offset direction '" + std::string(label) + "'");
}

std::vector<Pose> generate_augmentation_grid(const SceneDatabase& db, const AugmentationParams& params) {
  if (params.yaw_steps < 1 || params.yaw_increment < 0 || params.yaw_steps * params.yaw_increment > 360.0 + 1e-9) {
    throw Error(ErrorCode::invalid_params, "yaw_steps * yaw_increment must lie in [0, 360]");
  }
  if (!(params.offset_distance >= 0)) throw Error(ErrorCode::invalid_params, "offset_distance must be >= 0");
  if (params.up.norm() == 0) throw Error(ErrorCode::invalid_params, "up vector is zero");
  const Eigen::Vector3d up = params.up.normalized();

  std::vector<Pose> out;
  std::vector<Eigen::Vector3d> centers;
  for (const Keyframe& kf : db.keyframes()) {
    const Eigen::Vector3d c = kf.pose.camera_center();
    Eigen::Vector3d forward = kf.pose.rotation.row(2).transpose();
    forward -= forward.dot(up) * up;
    if (forward.norm() < 1e-9) {
      // Looking straight along the vertical; use the image-down axis instead.
      forward = kf.pose.rotation.row(1).transpose();
      forward -= forward.dot(up) * up;
    }
    forward.normalize();
    const Eigen::Vector3d right = forward.cross(up);

    for (const OffsetDirection d : params.offsets) {
      Eigen::Vector3d dir;
      switch (d) {
        case OffsetDirection::front: dir = forward; break;
        case OffsetDirection::back: dir = -forward; break;
        case OffsetDirection::left: dir = -right; break;
        case OffsetDirection::right: dir = right; break;
      }
      const Eigen::Vector3d center = c + params.offset_distance * dir;
      for (int step = 0; step < params.yaw_steps; ++step) {
        const double angle = step * params.yaw_increment * std::numbers::pi / 180.0;
        Pose p;
        p.rotation = kf.pose.rotation * rotation_about(up, -angle);
        p.translation = -p.rotation * center;
        bool duplicate = false;
        for (std::size_t i = 0; i < out.size() && !duplicate; ++i) {
          duplicate = near_duplicate(out[i], centers[i], p, center);
        }
        if (duplicate) continue;
        out.push_back(p);
        centers.push_back(center);
      }
    }
  }
  return out;
}

bool in_free_space(const SceneDatabase& db, const Eigen::Vector3d& center, double margin) {
  for (const Keyframe& kf : db.keyframes()) {
    const Eigen::Vector3d x = kf.pose.to_camera(center);
    if (x.z() <= 1e-6) continue;
    const Intrinsics& k = kf.intrinsics;
    const long u = std::lround(k.fx * x.x() / x.z() + k.cx);
    const long v = std::lround(k.fy * x.y() / x.z() + k.cy);
    if (!kf.depth.contains(static_cast<int>(u), static_cast<int>(v))) continue;
    const float d = kf.depth(static_cast<int>(u), static_cast<int>(v));
    if (d > 0 && x.z() > d + margin) return false;
  }
  return true;
}

std::vector<KeyframeId> view_sources(const SceneDatabase& db, const Pose& pose, const ViewParams& params) {
  NearestParams nearest;
  nearest.k = params.num_sources;
  nearest.rotation_weight = params.rotation_weight;
  return db.nearest_keyframes(pose, nearest);
}

VirtualFeatures VirtualViewStore::local_features(const SceneDatabase& db, std::size_t i, FeatureMode local_mode,
                                                 const StudentParams* student) const {
  const VirtualRecord& r = records.at(i);
  const ProjectedView v = render_projection(db, r.pose, intrinsics, r.sources, render);
  return render_features(v, local_mode, student, gem_p, {.global = false, .local = true});
}

std::vector<std::uint8_t> VirtualViewStore::encode() const {
  io::ByteWriter w;
  w.magic("VLVF");
  w.u32(kStoreFormatVersion);
  for (const double x : {intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy}) w.f64(x);
  w.u32(static_cast<std::uint32_t>(intrinsics.width));
  w.u32(static_cast<std::uint32_t>(intrinsics.height));
  w.f64(render.occlusion_tolerance);
  w.f64(render.keypoint_dedup_radius);
  w.f64(gem_p);
  w.u8(static_cast<std::uint8_t>(mode));
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const VirtualRecord& r : records) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) w.f64(r.pose.rotation(a, b));
    for (int a = 0; a < 3; ++a) w.f64(r.pose.translation(a));
    w.u32(static_cast<std::uint32_t>(r.sources.size()));
    for (const KeyframeId id : r.sources) w.u32(id);
    w.f64(r.coverage);
    w.u32(static_cast<std::uint32_t>(r.global.values.size()));
    w.f32s(r.global.values);
  }
  return w.bytes();
}

VirtualViewStore VirtualViewStore::decode(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "virtual store");
  r.expect_magic("VLVF");
  const std::uint32_t version = r.u32();
  if (version != kStoreFormatVersion) {
    throw Error(ErrorCode::format_version_mismatch, "virtual store version " + std::to_string(version));
  }
  VirtualViewStore s;
  s.intrinsics.fx = r.f64();
  s.intrinsics.fy = r.f64();
  s.intrinsics.cx = r.f64();
  s.intrinsics.cy = r.f64();
  s.intrinsics.width = static_cast<int>(r.u32());
  s.intrinsics.height = static_cast<int>(r.u32());
  s.render.occlusion_tolerance = r.f64();
  s.render.keypoint_dedup_radius = r.f64();
  s.gem_p = r.f64();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw Error(ErrorCode::io, "virtual store: unknown feature mode");
  s.mode = static_cast<FeatureMode>(mode);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    VirtualRecord rec;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) rec.pose.rotation(a, b) = r.f64();
    for (int a = 0; a < 3; ++a) rec.pose.translation(a) = r.f64();
    const std::uint32_t ns = r.u32();
    if (ns > r.remaining() / 4) throw Error(ErrorCode::io, "virtual store: truncated source list");
    for (std::uint32_t j = 0; j < ns; ++j) rec.sources.push_back(r.u32());
    rec.coverage = r.f64();
    const std::uint32_t m = r.u32();
    if (m > r.remaining() / 4) throw Error(ErrorCode::io, "virtual store: truncated descriptor");
    rec.global.values.resize(m);
    r.f32s(rec.global.values);
    s.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::io, "virtual store: trailing bytes");
  return s;
}

void VirtualViewStore::save(const std::filesystem::path& path) const { io::write_file(path, encode()); }

VirtualViewStore VirtualViewStore::load(const std::filesystem::path& path) { return decode(io::read_file(path)); }

RetrievalIndex build_real_index(const SceneDatabase& db, int whiten_dims) {
  const std::vector<RawEntry> reals = real_entries(db);
  return RetrievalIndex::build(reals, whiten_dims);
}

AugmentedIndex augment_database(const SceneDatabase& db, std::span<const Pose> grid, const ViewParams& params,
                                FeatureMode mode, const StudentParams* student, int whiten_dims) {
  if (db.empty()) throw Error(ErrorCode::empty_database, "cannot augment an empty database");
  if (mode == FeatureMode::distilled && student == nullptr) {
    throw Error(ErrorCode::missing_student, "distilled augmentation requires a student checkpoint");
  }
  const Intrinsics k = db.keyframes().front().intrinsics;

  enum class Outcome { kept, free_space, invalid };
  struct Slot {
    Outcome outcome = Outcome::invalid;
    VirtualRecord record;
  };
  std::vector<Slot> slots(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    Slot& slot = slots[i];
    const Pose& pose = grid[i];
    if (params.free_space_check && !in_free_space(db, pose.camera_center(), params.free_space_margin)) {
      slot.outcome = Outcome::free_space;
      return;
    }
    const std::vector<KeyframeId> sources = view_sources(db, pose, params);
    const ProjectedView v = render_projection(db, pose, k, sources, params.render);
    const Validity val = validity(v, params.min_coverage, params.min_keypoints);
    if (!val.valid) return;
    const VirtualFeatures f = render_features(v, mode, student, params.gem_p, {.global = true, .local = false});
    slot.outcome = Outcome::kept;
    slot.record = {pose, sources, val.coverage, f.global};
  });

  AugmentedIndex out;
  out.grid_size = grid.size();
  out.store.intrinsics = k;
  out.store.render = params.render;
  out.store.gem_p = params.gem_p;
  out.store.mode = mode;
  std::vector<RawEntry> entries = real_entries(db);
  for (Slot& s : slots) {
    if (s.outcome == Outcome::free_space) ++out.rejected_free_space;
    if (s.outcome == Outcome::invalid) ++out.rejected_validity;
    if (s.outcome != Outcome::kept) continue;
    const auto ref = static_cast<std::uint32_t>(out.store.records.size());
    entries.push_back({EntryKind::virtual_view, ref, s.record.pose, s.record.global.values});
    out.store.records.push_back(std::move(s.record));
  }
  out.index = RetrievalIndex::build(entries, whiten_dims);
  return out;
}

}  // namespace vl
