#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "test_util.h"
#include "vl/common/binary_io.h"
#include "vl/common/error.h"
#include "vl/common/parallel.h"
#include "vl/pipeline/pipeline.h"
#include "vl/synth_eval/scene.h"

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

SceneDatabase posed_db(const std::vector<Pose>& poses) {
  SceneDatabase db;
  const Intrinsics k{40, 40, 23.5, 17.5, 48, 36};
  for (const Pose& p : poses) db.ingest_keyframe(ColorImage(48, 36), DepthMap(48, 36, 3.0f), p, k);
  return db;
}

// Shared small scene: built once, read by several cases.
const synth::SyntheticScene& scene() {
  static const synth::SyntheticScene s = [] {
    synth::SceneParams sp;
    sp.num_db = 12;
    sp.num_queries = 6;
    sp.regime = synth::OverlapRegime::high;
    synth::SyntheticScene out = synth::generate_scene(21, sp);
    out.db.compute_features();
    return out;
  }();
  return s;
}

double yaw_of(const Pose& p) {
  const Eigen::Vector3d f = p.rotation.row(2).transpose();
  return std::atan2(f.y(), f.x());
}

}  // namespace

TEST_CASE("a zero offset grid spins each keyframe in place") {
  const SceneDatabase db = posed_db({synth::camera_pose({1, 1, 1.5}, 0.3), synth::camera_pose({4, 2, 1.5}, 2.0)});
  AugmentationParams p;
  p.offset_distance = 0.0;
  const std::vector<Pose> grid = generate_augmentation_grid(db, p);
  REQUIRE(grid.size() == 2 * 12);  // the four offsets collapse onto one center
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Keyframe& kf = db.keyframe(static_cast<KeyframeId>(i / 12));
    CHECK((grid[i].camera_center() - kf.pose.camera_center()).norm() < 1e-12);
    CHECK(grid[i].orthonormality_error() < 1e-12);
    const double step = std::remainder(yaw_of(grid[i]) - yaw_of(kf.pose), 2 * std::numbers::pi);
    const double want = std::remainder(static_cast<double>(i % 12) * std::numbers::pi / 6, 2 * std::numbers::pi);
    CHECK(std::abs(std::remainder(step - want, 2 * std::numbers::pi)) < 1e-9);
  }
}

TEST_CASE("grid offsets follow the camera's horizontal frame") {
  const Pose kf = synth::camera_pose({5, 5, 1.5}, 0.0);  // looking along +x
  const SceneDatabase db = posed_db({kf});
  AugmentationParams p;
  p.offset_distance = 2.0;
  p.yaw_steps = 1;
  const std::vector<Pose> grid = generate_augmentation_grid(db, p);
  REQUIRE(grid.size() == 4);
  CHECK((grid[0].camera_center() - Eigen::Vector3d(7, 5, 1.5)).norm() < 1e-12);  // front
  CHECK((grid[1].camera_center() - Eigen::Vector3d(3, 5, 1.5)).norm() < 1e-12);  // back
  CHECK(std::abs(grid[2].camera_center().y() - 5.0) == doctest::Approx(2.0));    // left and right
  CHECK(grid[2].camera_center().y() + grid[3].camera_center().y() == doctest::Approx(10.0));
  for (const Pose& g : grid) CHECK((g.rotation - kf.rotation).norm() < 1e-12);

  p.yaw_steps = 13;
  CHECK(code_of([&] { generate_augmentation_grid(db, p); }) == ErrorCode::invalid_params);
  CHECK(parse_offset_direction("left") == OffsetDirection::left);
  CHECK(code_of([] { parse_offset_direction("up"); }) == ErrorCode::invalid_params);
}

TEST_CASE("free space rejects centers behind observed surfaces") {
  // Camera at the origin looking along +x at a wall 3 m away.
  const SceneDatabase db = posed_db({synth::camera_pose({0, 0, 1.5}, 0.0)});
  CHECK(in_free_space(db, {1.5, 0, 1.5}));
  CHECK_FALSE(in_free_space(db, {4.0, 0, 1.5}));
  CHECK(in_free_space(db, {-2.0, 0, 1.5}));  // behind the camera, unobserved
}

TEST_CASE("duplicate correspondences keep the first") {
  std::vector<Correspondence2D3D> pooled(4);
  pooled[0] = {{1, 1}, {0, 0, 1}, 0, 3, point_key(1, 7)};
  pooled[1] = {{1, 1}, {0, 0, 2}, 5, 3, point_key(1, 7)};  // same pair via another view
  pooled[2] = {{1, 1}, {0, 0, 3}, 5, 3, point_key(2, 7)};
  pooled[3] = {{2, 2}, {0, 0, 4}, 0, 4, point_key(1, 7)};
  const auto u = unique_correspondences(pooled);
  REQUIRE(u.size() == 3);
  CHECK(u[0].world.z() == 1);
  CHECK(u[1].world.z() == 3);
  CHECK(u[2].world.z() == 4);
}

TEST_CASE("augmentation keeps valid views and indexes reals plus virtuals") {
  const SceneDatabase& db = scene().db;
  AugmentationParams ap;
  ap.offset_distance = 1.0;
  ap.yaw_steps = 4;
  ap.yaw_increment = 90;
  const std::vector<Pose> grid = generate_augmentation_grid(db, ap);
  const AugmentedIndex aug = augment_database(db, grid, ap.view);
  CHECK(aug.grid_size == grid.size());
  CHECK(aug.store.size() + aug.rejected_free_space + aug.rejected_validity == grid.size());
  CHECK(aug.store.size() > 0);
  CHECK(aug.index.size() == db.size() + aug.store.size());
  std::size_t virtuals = 0;
  for (const IndexEntry& e : aug.index.entries()) {
    if (e.kind != EntryKind::virtual_view) continue;
    CHECK(e.pose == aug.store.records.at(e.ref).pose);
    ++virtuals;
  }
  CHECK(virtuals == aug.store.size());
  for (const VirtualRecord& r : aug.store.records) CHECK(r.coverage >= ap.view.min_coverage);

  const VirtualFeatures f = aug.store.local_features(db, 0, FeatureMode::deterministic, nullptr);
  CHECK(f.local.size() >= ap.view.min_keypoints);
  CHECK(f.pose == aug.store.records[0].pose);

  const VirtualViewStore back = VirtualViewStore::decode(aug.store.encode());
  CHECK(back == aug.store);
  const fs::path path = fs::temp_directory_path() / "vl_test_store.vlvf";
  aug.store.save(path);
  CHECK(VirtualViewStore::load(path) == aug.store);
  fs::remove(path);
  auto bytes = aug.store.encode();
  bytes[0] = 'X';
  CHECK_THROWS_AS(VirtualViewStore::decode(bytes), Error);
}

TEST_CASE("localization is identical for every thread count") {
  const synth::SyntheticScene& s = scene();
  const RetrievalIndex index = build_real_index(s.db);
  LocalizeParams lp;
  lp.top_k = 5;
  lp.seed = 9;
  const Localizer loc(s.db, index, nullptr, s.params.intrinsics, lp);
  std::vector<QueryInput> queries;
  for (const synth::QueryRecord& q : s.queries) queries.push_back({q.id, q.image});

  const unsigned saved = thread_count();
  std::vector<std::string> runs[2];
  for (const unsigned threads : {1u, 4u}) {
    set_thread_count(threads);
    for (const LocalizationResult& r : loc.localize_batch(queries)) {
      runs[threads == 1 ? 0 : 1].push_back(result_json(r, false));
    }
  }
  set_thread_count(saved);
  CHECK(runs[0] == runs[1]);

  std::size_t ok = 0;
  for (const LocalizationResult& r : loc.localize_batch(queries)) {
    CHECK(r.retrieved.size() == 5);
    if (!r.coarse.ok()) continue;
    ++ok;
    CHECK(r.final_estimate().inliers.size() >= r.coarse.inliers.size());
    const PoseError e = pose_error(r.final_estimate().pose, s.queries[r.query_id].pose);
    CHECK(e.translation_error < 0.5);
  }
  CHECK(ok >= queries.size() - 1);
}

TEST_CASE("results files keep poses bit-exact") {
  SplitMix64 rng(71);
  std::vector<LocalizationResult> results(3);
  for (std::uint32_t i = 0; i < 3; ++i) {
    results[i].query_id = i;
    results[i].coarse.pose = test::random_room_pose(rng);
    results[i].coarse.status = i == 1 ? Status::failed : Status::ok;
    results[i].coarse.failure = "too few correspondences";
    results[i].coarse.inliers = {1, 2, 3, 4};
  }
  results[2].refined = results[2].coarse;
  results[2].refined->pose = test::random_room_pose(rng);
  results[2].refined->stage = Stage::refined;

  const fs::path path = fs::temp_directory_path() / "vl_test_results.jsonl";
  write_results(path, results);
  const auto back = read_results(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].ok);
  CHECK_FALSE(back[1].ok);
  CHECK(back[0].pose == results[0].coarse.pose);
  CHECK(back[2].pose == results[2].refined->pose);
  CHECK(result_json(results[0], false).find("timings_ms") == std::string::npos);
  CHECK(result_json(results[0], true).find("timings_ms") != std::string::npos);

  io::write_text(path, "{\"query_id\": 1}\n");
  CHECK(code_of([&] { read_results(path); }) == ErrorCode::io);
  fs::remove(path);
}

TEST_CASE("ground truth files round-trip and reject bad lines") {
  SplitMix64 rng(72);
  std::vector<GroundTruth> gts;
  for (std::uint32_t i = 0; i < 5; ++i) gts.push_back({i * 3, test::random_room_pose(rng)});
  const fs::path path = fs::temp_directory_path() / "vl_test_gt.csv";
  write_ground_truth(path, gts);
  const auto back = read_ground_truth(path);
  REQUIRE(back.size() == gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    CHECK(back[i].query_id == gts[i].query_id);
    CHECK(back[i].pose == gts[i].pose);
  }
  io::write_text(path, "id,pose\n");
  CHECK(code_of([&] { read_ground_truth(path); }) == ErrorCode::io);
  io::write_text(path, "query_id,pose\nx1,1 0 0 0 1 0 0 0 1 0 0 0\n");
  CHECK(code_of([&] { read_ground_truth(path); }) == ErrorCode::io);
  fs::remove(path);
}
