#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.h"
#include "test_util.h"
#include "vl/common/error.h"
#include "vl/matching/matching.h"

using namespace vl;

namespace {

std::vector<float> random_desc(int dim, SplitMix64& rng) {
  std::vector<float> d(dim);
  for (float& v : d) v = static_cast<float>(std::abs(rng.normal()));
  normalize(d);
  return d;
}

// b holds noisy copies of some descriptors of a, plus distractors, shuffled.
void make_sets(int na, int nb, int dim, double noise, SplitMix64& rng, LocalFeatureSet& a, LocalFeatureSet& b) {
  a = LocalFeatureSet{};
  b = LocalFeatureSet{};
  a.dim = b.dim = dim;
  std::vector<std::vector<float>> da;
  for (int i = 0; i < na; ++i) {
    da.push_back(random_desc(dim, rng));
    a.push_back({static_cast<float>(i), 0.0f, 0.0f}, da.back());
  }
  for (int j = 0; j < nb; ++j) {
    std::vector<float> d;
    if (rng.uniform(0, 1) < 0.6) {
      d = da[rng.index(na)];
      for (float& v : d) v += static_cast<float>(noise * rng.normal());
      normalize(d);
    } else {
      d = random_desc(dim, rng);
    }
    b.push_back({static_cast<float>(j), 1.0f, 0.0f}, d);
  }
}

}  // namespace

TEST_CASE("matching equals brute-force mutual nearest neighbours with the ratio test") {
  SplitMix64 rng(61);
  std::size_t total = 0;
  for (int trial = 0; trial < 40; ++trial) {
    LocalFeatureSet a, b;
    const int na = 1 + static_cast<int>(rng.index(120)), nb = 1 + static_cast<int>(rng.index(120));
    make_sets(na, nb, 32, rng.uniform(0.0, 0.3), rng, a, b);
    for (const double ratio : {0.6, 0.8, 1.0}) {
      const MatchSet got = match_descriptors(a, b, ratio, 5);
      const std::vector<Match> want = test::brute_force_matches(a, b, ratio);
      CHECK(got.reference_id == 5);
      REQUIRE(got.pairs.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got.pairs[i].query_index == want[i].query_index);
        CHECK(got.pairs[i].reference_index == want[i].reference_index);
        CHECK(std::abs(got.pairs[i].distance - want[i].distance) < 1e-9);
      }
      total += want.size();
    }
  }
  MESSAGE("matches compared: " << total);
  CHECK(total > 100);
}

TEST_CASE("singletons match without a second neighbour") {
  SplitMix64 rng(62);
  LocalFeatureSet a, b;
  a.dim = b.dim = 8;
  const auto d = random_desc(8, rng);
  a.push_back({1, 2, 0}, d);
  b.push_back({3, 4, 0}, random_desc(8, rng));
  const MatchSet m = match_descriptors(a, b);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].query_index == 0);
}

TEST_CASE("nearest-neighbour ties go to the lower index") {
  LocalFeatureSet a, b;
  a.dim = b.dim = 2;
  a.push_back({0, 0, 0}, std::vector<float>{1, 0});
  b.push_back({0, 0, 0}, std::vector<float>{0, 1});
  b.push_back({0, 0, 0}, std::vector<float>{0, 1});
  // Equal distances: the ratio test fails at any ratio below 1.
  CHECK(match_descriptors(a, b, 0.8).pairs.empty());
  const MatchSet m = match_descriptors(a, b, 1.0);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].reference_index == 0);
}

TEST_CASE("empty or mismatched sets are rejected") {
  LocalFeatureSet a, b;
  a.dim = b.dim = 2;
  a.push_back({0, 0, 0}, std::vector<float>{1, 0});
  try {
    match_descriptors(a, b);
    FAIL("expected EmptyFeatureSet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_feature_set);
  }
  LocalFeatureSet c;
  c.dim = 3;
  c.push_back({0, 0, 0}, std::vector<float>{1, 0, 0});
  CHECK_THROWS_AS(match_descriptors(a, c), Error);
}

TEST_CASE("lifting uses the reference depth and drops holes") {
  Keyframe kf;
  kf.id = 3;
  kf.intrinsics = {50, 50, 19.5, 19.5, 40, 40};
  kf.pose = Pose::look_at({1, 2, 1.5}, {0, 1, 0}, {0, 0, -1});
  kf.depth = DepthMap(40, 40, 2.5f);
  kf.depth(30, 30) = 0.0f;
  LocalFeatureSet ref, query;
  ref.dim = query.dim = 2;
  ref.push_back({10, 12, 1}, std::vector<float>{1, 0});
  ref.push_back({30, 30, 1}, std::vector<float>{0, 1});
  query.push_back({5, 6, 1}, std::vector<float>{1, 0});
  query.push_back({7, 8, 1}, std::vector<float>{0, 1});
  kf.local_features = ref;
  MatchSet m;
  m.reference_id = 3;
  m.pairs = {{0, 0, 0.0}, {1, 1, 0.0}};
  const auto corr = lift_correspondences(m, query, kf);
  REQUIRE(corr.size() == 1);
  CHECK(corr[0].pixel == Eigen::Vector2d(5, 6));
  CHECK((corr[0].world - backproject(kf.intrinsics, kf.pose, {10, 12}, 2.5)).norm() < 1e-12);
  CHECK(corr[0].point == point_key(3, 0));
  CHECK(corr[0].reference_id == 3);
}

TEST_CASE("lifting from virtual features uses the stored world points") {
  VirtualFeatures v;
  v.local.dim = 2;
  v.local.push_back({1, 1, 0}, std::vector<float>{1, 0});
  v.world_points.push_back({4, 5, 6});
  v.point_keys.push_back(point_key(9, 17));
  LocalFeatureSet query;
  query.dim = 2;
  query.push_back({3, 4, 0}, std::vector<float>{1, 0});
  const MatchSet m = match_descriptors(query, v.local, 0.8, 42);
  const auto corr = lift_correspondences(m, query, v);
  REQUIRE(corr.size() == 1);
  CHECK(corr[0].world == Eigen::Vector3d(4, 5, 6));
  CHECK(corr[0].point == point_key(9, 17));
  CHECK(corr[0].reference_id == 42);
}
