#include "vl/scene_db/scene_db.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/common/parallel.h"

namespace vl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

std::vector<std::uint8_t> checked_read(const fs::path& dir, const std::string& rel, std::uint32_t expected_crc) {
  const auto bytes = io::read_file(dir / rel);
  if (io::crc32(bytes) != expected_crc) throw Error(ErrorCode::checksum_mismatch, rel);
  return bytes;
}

}  // namespace

KeyframeId SceneDatabase::ingest_keyframe(ColorImage image, DepthMap depth, const Pose& pose,
                                          const Intrinsics& intrinsics) {
  if (image.width() != depth.width() || image.height() != depth.height()) {
    throw Error(ErrorCode::dimension_mismatch, "image and depth sizes differ");
  }
  if (image.width() != intrinsics.width || image.height() != intrinsics.height) {
    throw Error(ErrorCode::dimension_mismatch, "image size differs from intrinsics");
  }
  for (float d : depth.data()) {
    if (!(d >= 0.0f) || !std::isfinite(d)) throw Error(ErrorCode::dimension_mismatch, "depth must be finite and >= 0");
  }
  Keyframe kf;
  kf.id = next_id_;
  kf.image = std::move(image);
  kf.depth = std::move(depth);
  kf.pose = pose;
  kf.intrinsics = intrinsics;
  insert(std::move(kf));
  return keyframes_.back().id;
}

void SceneDatabase::insert(Keyframe kf) {
  if (index_.contains(kf.id)) throw Error(ErrorCode::dimension_mismatch, "duplicate keyframe id");
  next_id_ = std::max(next_id_, kf.id + 1);
  index_[kf.id] = keyframes_.size();
  keyframes_.push_back(std::move(kf));
}

const Keyframe& SceneDatabase::keyframe(KeyframeId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::unknown_keyframe, std::to_string(id));
  return keyframes_[it->second];
}

Keyframe& SceneDatabase::keyframe(KeyframeId id) {
  return const_cast<Keyframe&>(std::as_const(*this).keyframe(id));
}

std::vector<KeyframeId> SceneDatabase::nearest_keyframes(const Pose& target, const NearestParams& params) const {
  if (keyframes_.empty()) throw Error(ErrorCode::empty_database, "nearest_keyframes on an empty database");
  const Eigen::Vector3d c = target.camera_center();
  std::vector<std::pair<double, KeyframeId>> scored;
  scored.reserve(keyframes_.size());
  for (const Keyframe& kf : keyframes_) {
    if (params.exclude && *params.exclude == kf.id) continue;
    double d = (kf.pose.camera_center() - c).norm();
    if (params.rotation_weight != 0.0) d += params.rotation_weight * rotation_angle(kf.pose.rotation, target.rotation);
    scored.emplace_back(d, kf.id);
  }
  const std::size_t k = std::min(params.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  std::vector<KeyframeId> ids;
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back(scored[i].second);
  return ids;
}

void SceneDatabase::compute_features(const FeatureParams& params) {
  parallel_for(keyframes_.size(), [&](std::size_t i) {
    Keyframe& kf = keyframes_[i];
    if (!kf.descriptor_grid) kf.descriptor_grid = describe_grid(kf.image);
    if (!kf.local_features) kf.local_features = extract_local(kf.image, params.detector);
    if (!kf.global_feature) kf.global_feature = global_descriptor(*kf.descriptor_grid, params.gem_p);
  });
}

void SceneDatabase::compute_descriptor_grids() {
  parallel_for(keyframes_.size(), [&](std::size_t i) {
    if (!keyframes_[i].descriptor_grid) keyframes_[i].descriptor_grid = describe_grid(keyframes_[i].image);
  });
}

void SceneDatabase::import_features(KeyframeId id, const fs::path& feat_path) {
  Keyframe& kf = keyframe(id);
  LocalFeatureSet local;
  GlobalDescriptor global;
  read_features(feat_path, local, global);
  for (const Keypoint& p : local.keypoints) {
    if (p.x < 0 || p.y < 0 || p.x > kf.image.width() - 1 || p.y > kf.image.height() - 1) {
      throw Error(ErrorCode::dimension_mismatch, "imported keypoint outside image bounds");
    }
  }
  kf.local_features = std::move(local);
  if (!global.values.empty()) kf.global_feature = std::move(global);
}

void SceneDatabase::save(const fs::path& dir) const {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "features");
  json manifest;
  manifest["format_version"] = kSceneFormatVersion;
  manifest["scene_name"] = name;
  manifest["params"] = creation_params;
  if (!keyframes_.empty()) manifest["intrinsics"] = intrinsics_to_json(keyframes_.front().intrinsics);
  json table = json::array();
  for (const Keyframe& kf : keyframes_) {
    const std::string stem = std::to_string(kf.id);
    json row;
    row["id"] = kf.id;
    row["pose"] = to_pose_string(kf.pose);
    row["intrinsics"] = intrinsics_to_json(kf.intrinsics);

    const std::string image_rel = "images/" + stem + ".ppm";
    const auto image_bytes = encode_ppm(kf.image);
    io::write_file(dir / image_rel, image_bytes);
    const std::string depth_rel = "depth/" + stem + ".f32";
    const auto depth_bytes = encode_depth(kf.depth);
    io::write_file(dir / depth_rel, depth_bytes);
    row["image"] = image_rel;
    row["depth"] = depth_rel;
    row["crc32"]["image"] = io::crc32(image_bytes);
    row["crc32"]["depth"] = io::crc32(depth_bytes);

    if (kf.local_features) {
      const std::string feat_rel = "features/" + stem + ".feat";
      const auto feat_bytes = encode_features(*kf.local_features, kf.global_feature.value_or(GlobalDescriptor{}));
      io::write_file(dir / feat_rel, feat_bytes);
      row["features"] = feat_rel;
      row["crc32"]["features"] = io::crc32(feat_bytes);
    } else {
      fs::remove(dir / ("features/" + stem + ".feat"));
      row["features"] = nullptr;
    }
    table.push_back(std::move(row));
  }
  manifest["keyframes"] = std::move(table);
  io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

SceneDatabase SceneDatabase::load(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_text(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, "manifest.json: " + std::string(e.what()));
  }
  try {
    const auto version = manifest.at("format_version").get<std::uint32_t>();
    if (version != kSceneFormatVersion) {
      throw Error(ErrorCode::format_version_mismatch,
                  "scene format " + std::to_string(version) + ", expected " + std::to_string(kSceneFormatVersion));
    }
    SceneDatabase db;
    db.name = manifest.value("scene_name", std::string("scene"));
    if (manifest.contains("params")) db.creation_params = manifest["params"].get<std::map<std::string, std::string>>();
    std::optional<Intrinsics> shared;
    if (manifest.contains("intrinsics")) shared = intrinsics_from_json(manifest["intrinsics"]);
    for (const json& row : manifest.at("keyframes")) {
      Keyframe kf;
      kf.id = row.at("id").get<KeyframeId>();
      kf.pose = parse_pose_string(row.at("pose").get<std::string>());
      if (row.contains("intrinsics")) {
        kf.intrinsics = intrinsics_from_json(row["intrinsics"]);
      } else if (shared) {
        kf.intrinsics = *shared;
      } else {
        throw Error(ErrorCode::io, "keyframe without intrinsics");
      }
      const json& crc = row.at("crc32");
      const auto image_rel = row.at("image").get<std::string>();
      kf.image = decode_ppm(checked_read(dir, image_rel, crc.at("image").get<std::uint32_t>()), image_rel);
      kf.depth = decode_depth(checked_read(dir, row.at("depth").get<std::string>(), crc.at("depth").get<std::uint32_t>()));
      if (kf.image.width() != kf.depth.width() || kf.image.height() != kf.depth.height()) {
        throw Error(ErrorCode::dimension_mismatch, "keyframe " + std::to_string(kf.id));
      }
      if (row.contains("features") && !row["features"].is_null()) {
        const auto bytes = checked_read(dir, row["features"].get<std::string>(), crc.at("features").get<std::uint32_t>());
        LocalFeatureSet local;
        GlobalDescriptor global;
        decode_features(bytes, local, global);
        kf.local_features = std::move(local);
        if (!global.values.empty()) kf.global_feature = std::move(global);
      }
      db.insert(std::move(kf));
    }
    return db;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::io, "manifest.json: " + std::string(e.what()));
  }
}

std::optional<double> sample_depth(const DepthMap& depth, double x, double y, double tolerance) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  if (depth.contains(x0, y0) && depth.contains(x0 + 1, y0 + 1)) {
    const double d00 = depth(x0, y0), d10 = depth(x0 + 1, y0), d01 = depth(x0, y0 + 1), d11 = depth(x0 + 1, y0 + 1);
    const double lo = std::min({d00, d10, d01, d11});
    const double hi = std::max({d00, d10, d01, d11});
    if (lo > 0 && hi - lo <= tolerance) {
      const double fx = x - x0, fy = y - y0;
      const double inv = (1 - fy) * ((1 - fx) / d00 + fx / d10) + fy * ((1 - fx) / d01 + fx / d11);
      return 1.0 / inv;
    }
  }
  const int xn = static_cast<int>(std::lround(x));
  const int yn = static_cast<int>(std::lround(y));
  if (!depth.contains(xn, yn)) return std::nullopt;
  const double d = depth(xn, yn);
  if (!(d > 0)) return std::nullopt;
  return d;
}

std::vector<std::uint8_t> encode_depth(const DepthMap& depth) {
  io::ByteWriter w;
  w.magic("VLDP");
  w.u32(static_cast<std::uint32_t>(depth.width()));
  w.u32(static_cast<std::uint32_t>(depth.height()));
  w.u32(0);
  w.f32s(depth.data());
  return w.bytes();
}

DepthMap decode_depth(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "depth");
  r.expect_magic("VLDP");
  const std::uint32_t w = r.u32();
  const std::uint32_t h = r.u32();
  r.u32();
  if (r.remaining() != static_cast<std::size_t>(w) * h * 4) throw Error(ErrorCode::io, "depth: size does not match header");
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  r.f32s(d.data());
  return d;
}

void write_depth(const fs::path& path, const DepthMap& depth) { io::write_file(path, encode_depth(depth)); }

DepthMap read_depth(const fs::path& path) { return decode_depth(io::read_file(path)); }

}  // namespace vl
