#include <algorithm>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "oracles.h"
#include "test_util.h"
#include "vl/common/error.h"
#include "vl/retrieval/retrieval.h"

using namespace vl;

namespace {

std::vector<float> random_global(int dim, SplitMix64& rng) {
  std::vector<float> g(dim);
  for (float& v : g) v = static_cast<float>(std::abs(rng.normal()));
  normalize(g);
  return g;
}

std::vector<RawEntry> random_corpus(std::size_t count, int dim, SplitMix64& rng) {
  std::vector<RawEntry> out;
  for (std::size_t i = 0; i < count; ++i) {
    RawEntry e;
    e.kind = i % 3 == 0 ? EntryKind::virtual_view : EntryKind::real;
    e.ref = static_cast<std::uint32_t>(1000 + i);
    e.pose = test::random_room_pose(rng);
    e.global = random_global(dim, rng);
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("top-k equals the exhaustive scan on 500 entries") {
  SplitMix64 rng(51);
  const auto corpus = random_corpus(500, 48, rng);
  const RetrievalIndex index = RetrievalIndex::build(corpus);
  CHECK(index.size() == 500);
  std::size_t mismatched = 0;
  for (int q = 0; q < 100; ++q) {
    const auto raw = random_global(48, rng);
    for (const std::size_t k : {1u, 10u, 40u}) {
      const auto got = index.query_topk(raw, k);
      const auto want = test::exhaustive_topk(index, raw, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        mismatched += got[i].id != want[i].id ? 1 : 0;
        CHECK(std::abs(got[i].distance - want[i].distance) < 1e-9);
      }
    }
  }
  CHECK(mismatched == 0);
}

TEST_CASE("entries keep their provenance in order") {
  SplitMix64 rng(52);
  const auto corpus = random_corpus(20, 16, rng);
  const RetrievalIndex index = RetrievalIndex::build(corpus);
  for (std::uint32_t i = 0; i < 20; ++i) {
    CHECK(index.entry(i).id == i);
    CHECK(index.entry(i).kind == corpus[i].kind);
    CHECK(index.entry(i).ref == corpus[i].ref);
    CHECK(index.entry(i).pose == corpus[i].pose);
    double n = 0;
    for (const float v : index.descriptor(i)) n += static_cast<double>(v) * v;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-5));
  }
  const auto self = index.query_topk(corpus[7].global, 1);
  CHECK(self.front().id == 7);
  CHECK(self.front().distance < 1e-6);
}

TEST_CASE("equal distances rank by ascending id") {
  SplitMix64 rng(53);
  auto corpus = random_corpus(12, 8, rng);
  corpus[9].global = corpus[4].global;
  corpus[2].global = corpus[4].global;
  const RetrievalIndex index = RetrievalIndex::build(corpus);
  const auto top = index.query_topk(corpus[4].global, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].id == 2);
  CHECK(top[1].id == 4);
  CHECK(top[2].id == 9);
  CHECK(top[0].distance == top[2].distance);
}

TEST_CASE("k larger than the corpus returns everything") {
  SplitMix64 rng(54);
  const RetrievalIndex index = RetrievalIndex::build(random_corpus(5, 8, rng));
  CHECK(index.query_topk(random_global(8, rng), 50).size() == 5);
  CHECK(index.query_topk(random_global(8, rng), 0).empty());
}

TEST_CASE("a single entry uses the identity whitening") {
  SplitMix64 rng(55);
  const auto corpus = random_corpus(1, 6, rng);
  const RetrievalIndex index = RetrievalIndex::build(corpus);
  const auto d = index.descriptor(0);
  for (int i = 0; i < 6; ++i) CHECK(d[i] == doctest::Approx(corpus[0].global[i]));
}

TEST_CASE("empty corpora are rejected") {
  try {
    RetrievalIndex::build({});
    FAIL("expected EmptyCorpus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_corpus);
  }
  const RetrievalIndex empty;
  const std::vector<float> q(4, 0.5f);
  CHECK_THROWS_AS(empty.query_topk(q, 3), Error);
}

TEST_CASE("indexes round-trip bit-exactly") {
  SplitMix64 rng(56);
  const RetrievalIndex index = RetrievalIndex::build(random_corpus(30, 12, rng), 8);
  CHECK(index.dim() == 8);
  const RetrievalIndex back = RetrievalIndex::decode(index.encode());
  CHECK(back == index);
  CHECK(back.encode() == index.encode());
  const auto path = std::filesystem::temp_directory_path() / "vl_test_index.vlix";
  index.save(path);
  CHECK(RetrievalIndex::load(path) == index);
  std::filesystem::remove(path);
  auto bytes = index.encode();
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(RetrievalIndex::decode(bytes), Error);
}
