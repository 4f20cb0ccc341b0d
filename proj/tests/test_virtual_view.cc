#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "oracles.h"
#include "test_util.h"
#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/synth_eval/scene.h"
#include "vl/virtual_view/virtual_view.h"

using namespace vl;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::io;
}

const Intrinsics kTiny{40, 40, 31.5, 31.5, 64, 64};

// Room with one box so that neighbouring views occlude each other.
struct TinyScene {
  synth::SceneGeometry geometry;
  SceneDatabase db;
};

TinyScene tiny_scene(int views = 4) {
  TinyScene s;
  s.geometry = synth::make_geometry({6, 5, 3}, {synth::Box{{2.6, 2.8, 0}, {3.4, 3.4, 1.6}}}, 3);
  for (int i = 0; i < views; ++i) {
    const Pose pose = synth::camera_pose({1.5 + 0.9 * i, 1.0, 1.4}, 1.2 + 0.15 * i, -0.1);
    const synth::RenderedView r = synth::render_view(s.geometry, kTiny, pose);
    s.db.ingest_keyframe(r.image, r.depth, pose, kTiny);
  }
  s.db.compute_features();
  return s;
}

struct OracleCandidate {
  KeyframeId id;
  int sx, sy, tx, ty;
  double depth;
};

// Every source pixel pushed through backproject/project of the geometry
// module, rounded to the nearest target pixel.
std::vector<OracleCandidate> oracle_candidates(const SceneDatabase& db, const Pose& target,
                                               const std::vector<KeyframeId>& ids) {
  std::vector<OracleCandidate> out;
  for (const KeyframeId id : ids) {
    const Keyframe& kf = db.keyframe(id);
    for (int y = 0; y < kf.depth.height(); ++y) {
      for (int x = 0; x < kf.depth.width(); ++x) {
        const double d = kf.depth(x, y);
        if (!(d > 0)) continue;
        const Eigen::Vector3d w = backproject(kf.intrinsics, kf.pose, {double(x), double(y)}, d);
        const Eigen::Vector3d c = target.to_camera(w);
        if (c.z() <= 1e-9) continue;
        const double u = kTiny.fx * c.x() / c.z() + kTiny.cx, v = kTiny.fy * c.y() / c.z() + kTiny.cy;
        const long px = std::lround(u), py = std::lround(v);
        if (px < 0 || py < 0 || px >= kTiny.width || py >= kTiny.height) continue;
        out.push_back({id, x, y, int(px), int(py), c.z()});
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("splat candidates agree with per-pixel projection") {
  const TinyScene s = tiny_scene();
  SplitMix64 rng(41);
  for (int t = 0; t < 4; ++t) {
    const Pose target = synth::camera_pose({rng.uniform(1.5, 4.5), rng.uniform(0.8, 1.5), 1.4},
                                           rng.uniform(0.9, 1.9), rng.uniform(-0.2, 0.1));
    const std::vector<KeyframeId> ids = {0, 1, 2, 3};
    const auto got = splat_candidates(s.db, target, kTiny, ids);
    const auto want = oracle_candidates(s.db, target, ids);
    REQUIRE(got.size() == want.size());
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].source_id == want[i].id);
      CHECK(got[i].sx == want[i].sx);
      CHECK(got[i].sy == want[i].sy);
      mismatched += (got[i].tx != want[i].tx || got[i].ty != want[i].ty) ? 1 : 0;
      CHECK(std::abs(got[i].depth - want[i].depth) < 1e-9);
    }
    CHECK(mismatched == 0);
  }
}

TEST_CASE("occlusion survivors equal the brute-force visibility oracle") {
  const TinyScene s = tiny_scene();
  SplitMix64 rng(42);
  std::size_t occluded = 0, total = 0;
  for (int t = 0; t < 8; ++t) {
    const Pose target = synth::camera_pose({rng.uniform(1.2, 4.8), rng.uniform(0.6, 2.0), rng.uniform(1.0, 1.8)},
                                           rng.uniform(0.6, 2.2), rng.uniform(-0.3, 0.2));
    const std::vector<KeyframeId> ids = {0, 1, 2, 3};
    const auto cands = splat_candidates(s.db, target, kTiny, ids);
    const Grid<float> z = splat_zbuffer(cands, kTiny.width, kTiny.height);
    for (const double tol : {0.0, 0.05, 0.5}) {
      const auto got = occlusion_survivors(cands, z, tol);
      CHECK(got == test::brute_force_visible(cands, tol));
      for (const auto k : got) occluded += k ? 0 : 1;
      total += got.size();
    }
    // The z-buffer is the per-pixel minimum.
    std::map<std::pair<int, int>, float> best;
    for (const auto& c : cands) {
      const auto d = static_cast<float>(c.depth);
      auto [it, fresh] = best.emplace(std::pair{c.tx, c.ty}, d);
      if (!fresh) it->second = std::min(it->second, d);
    }
    for (int y = 0; y < kTiny.height; ++y)
      for (int x = 0; x < kTiny.width; ++x) {
        const auto it = best.find({x, y});
        if (it == best.end()) {
          CHECK(std::isinf(z(x, y)));
        } else {
          CHECK(z(x, y) == it->second);
        }
      }
  }
  MESSAGE("occluded candidates: " << occluded << " of " << total);
  CHECK(occluded > 0);  // the scene must actually exercise occlusion
}

TEST_CASE("rendering a keyframe from its own pose reproduces it") {
  const TinyScene s = tiny_scene(1);
  const Keyframe& kf = s.db.keyframe(0);
  const std::vector<KeyframeId> ids = {0};
  const ProjectedView v = render_projection(s.db, kf.pose, kTiny, ids);
  for (int y = 0; y < kTiny.height; ++y)
    for (int x = 0; x < kTiny.width; ++x) {
      REQUIRE(v.filled(x, y) == (kf.depth(x, y) > 0));
      if (!v.filled(x, y)) continue;
      CHECK(std::abs(v.zbuffer(x, y) - kf.depth(x, y)) <= 1e-5f * kf.depth(x, y));
      CHECK(v.color_grid(x, y) == kf.image(x, y));
    }
  std::size_t with_depth = 0;
  for (const Keypoint& kp : kf.local_features->keypoints) with_depth += sample_depth(kf.depth, kp.x, kp.y) ? 1 : 0;
  CHECK(v.keypoints.size() <= with_depth);
  for (std::size_t i = 0; i < v.keypoints.size(); ++i) {
    const ProjectedKeypoint& p = v.keypoints[i];
    const Keypoint& kp = kf.local_features->keypoints[p.source_index];
    CHECK((p.pixel - Eigen::Vector2d(kp.x, kp.y)).norm() < 1e-9);
    const auto src = kf.local_features->descriptor(p.source_index);
    CHECK(std::equal(src.begin(), src.end(), v.keypoint_descriptor(i).begin()));
  }
  CHECK(v.feature_grid.valid_count() > 0);
}

TEST_CASE("keypoints are deduplicated across sources") {
  TinyScene s = tiny_scene(1);
  const Keyframe kf = s.db.keyframe(0);
  s.db.ingest_keyframe(kf.image, kf.depth, kf.pose, kTiny);  // identical twin
  s.db.compute_features();
  const std::vector<KeyframeId> one = {0}, both = {1, 0};
  const ProjectedView a = render_projection(s.db, kf.pose, kTiny, one);
  const ProjectedView b = render_projection(s.db, kf.pose, kTiny, both);
  REQUIRE(a.keypoints.size() == b.keypoints.size());
  for (const ProjectedKeypoint& kp : b.keypoints) CHECK(kp.source_id == 1);  // caller order wins
  RenderParams keep_all;
  keep_all.keypoint_dedup_radius = 0;
  const ProjectedView c = render_projection(s.db, kf.pose, kTiny, both, keep_all);
  CHECK(c.keypoints.size() >= 2 * a.keypoints.size() - 2);
}

TEST_CASE("a view facing away from every source is empty and invalid") {
  const TinyScene s = tiny_scene(2);
  const Keyframe& kf = s.db.keyframe(0);
  // Turn the first camera around: it now sees only what lies behind both sources.
  const Pose back = synth::camera_pose(kf.pose.camera_center(), 1.2 + std::numbers::pi, 0.0);
  const std::vector<KeyframeId> ids = {0};
  const ProjectedView v = render_projection(s.db, back, kTiny, ids);
  const Validity val = validity(v);
  CHECK_FALSE(val.valid);
  CHECK(val.coverage < 0.05);
  CHECK(code_of([&] { render_projection(s.db, back, kTiny, {}); }) == ErrorCode::no_sources);

  ProjectedView empty;
  empty.zbuffer = Grid<float>(8, 8, std::numeric_limits<float>::infinity());
  empty.feature_grid = DescriptorGrid(1, 1, kDescriptorDim);
  CHECK(validity(empty).coverage == 0.0);
  CHECK(code_of([&] { render_features(empty, FeatureMode::deterministic); }) == ErrorCode::empty_mask);
}

TEST_CASE("validity thresholds coverage and keypoint count") {
  const TinyScene s = tiny_scene(1);
  const std::vector<KeyframeId> ids = {0};
  const ProjectedView v = render_projection(s.db, s.db.keyframe(0).pose, kTiny, ids);
  const Validity loose = validity(v, 0.2, 1);
  CHECK(loose.valid);
  CHECK(loose.coverage > 0.9);
  CHECK_FALSE(validity(v, 0.2, v.keypoints.size() + 1).valid);
  CHECK_FALSE(validity(v, 1.01, 0).valid);
}

TEST_CASE("deterministic virtual features carry point keys and world points") {
  const TinyScene s = tiny_scene(3);
  const std::vector<KeyframeId> ids = {1, 0, 2};
  const Pose target = synth::camera_pose({2.4, 1.2, 1.4}, 1.35, -0.1);
  const ProjectedView v = render_projection(s.db, target, kTiny, ids);
  const VirtualFeatures f = render_features(v, FeatureMode::deterministic);
  CHECK(f.renderer_tag == FeatureMode::deterministic);
  CHECK(f.global == global_descriptor(v.feature_grid, 3.0));
  REQUIRE(f.local.size() == v.keypoints.size());
  REQUIRE(f.world_points.size() == f.local.size());
  REQUIRE(f.point_keys.size() == f.local.size());
  for (std::size_t i = 0; i < f.local.size(); ++i) {
    const ProjectedKeypoint& kp = v.keypoints[i];
    CHECK(f.point_keys[i] == point_key(kp.source_id, kp.source_index));
    const std::uint64_t high = f.point_keys[i] >> 32;
    CHECK(high == kp.source_id);
    CHECK((f.point_keys[i] & 0xffffffffu) == kp.source_index);
    CHECK(f.world_points[i] == kp.world);
    const Projection p = project(kTiny, target, kp.world);
    CHECK((p.pixel - kp.pixel).norm() < 1e-6);
  }
  CHECK(code_of([&] { render_features(v, FeatureMode::distilled); }) == ErrorCode::missing_student);
  FeatureRequest global_only;
  global_only.local = false;
  const VirtualFeatures g = render_features(v, FeatureMode::deterministic, nullptr, 3.0, global_only);
  CHECK(g.local.empty());
  CHECK(g.global == f.global);
}

TEST_CASE("rendering is deterministic") {
  const TinyScene s = tiny_scene(3);
  const std::vector<KeyframeId> ids = {2, 0, 1};
  const Pose target = synth::camera_pose({2.0, 1.1, 1.5}, 1.5, 0.0);
  CHECK(render_projection(s.db, target, kTiny, ids) == render_projection(s.db, target, kTiny, ids));
}

TEST_CASE("debug dump writes color, z-buffer and keypoints") {
  const TinyScene s = tiny_scene(1);
  const std::vector<KeyframeId> ids = {0};
  const ProjectedView v = render_projection(s.db, s.db.keyframe(0).pose, kTiny, ids);
  const fs::path prefix = fs::temp_directory_path() / "vl_test_dump";
  write_debug_dump(v, prefix);
  CHECK(read_ppm(prefix.string() + "_color.ppm") == v.color_grid);
  const DepthMap z = read_depth(prefix.string() + "_zbuffer.f32");
  CHECK(z.width() == v.zbuffer.width());
  for (std::size_t i = 0; i < z.data().size(); ++i) {
    const float a = z.data()[i], b = v.zbuffer.data()[i];
    const bool same = a == b || (std::isinf(a) && std::isinf(b));
    CHECK(same);
  }
  const std::string csv = io::read_text(prefix.string() + "_keypoints.csv");
  CHECK(csv.rfind("source_id,kp_index,x,y,X,Y,Z\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == v.keypoints.size() + 1);
  for (const char* suffix : {"_color.ppm", "_zbuffer.f32", "_keypoints.csv"}) fs::remove(prefix.string() + suffix);
}
