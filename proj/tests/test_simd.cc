#include <cmath>
#include <vector>

#include "doctest.h"
#include "vl/common/rng.h"
#include "vl/simd/kernels.h"

using namespace vl;

namespace {

std::vector<float> random_floats(std::size_t n, SplitMix64& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

std::vector<double> random_doubles(std::size_t n, SplitMix64& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-10, 10);
  return v;
}

std::vector<simd::Isa> vector_isas() {
  std::vector<simd::Isa> out;
  for (const simd::Isa isa : {simd::Isa::avx2, simd::Isa::neon}) {
    if (simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

// Restores the dispatcher when a test case ends.
struct IsaGuard {
  simd::Isa saved = simd::active_isa();
  ~IsaGuard() { simd::set_active_isa(saved); }
};

}  // namespace

TEST_CASE("scalar kernels agree with a naive double loop") {
  SplitMix64 rng(21);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 16u, 33u, 128u, 1001u}) {
    const auto a = random_floats(n, rng), b = random_floats(n, rng);
    double oracle = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(a[i]) - b[i];
      oracle += d * d;
    }
    CHECK(simd::scalar::squared_l2(a.data(), b.data(), n) == doctest::Approx(oracle).epsilon(1e-13));

    const auto x = random_doubles(n, rng), y = random_doubles(n, rng);
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * y[i];
    CHECK(simd::scalar::dot(x.data(), y.data(), n) == doctest::Approx(dot).epsilon(1e-12));

    auto z = y;
    simd::scalar::axpy(0.5, x.data(), z.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(z[i] == y[i] + 0.5 * x[i]);
  }
}

TEST_CASE("vector kernels are bit-identical to scalar") {
  SplitMix64 rng(22);
  const auto isas = vector_isas();
  MESSAGE("detected ISA: " << simd::to_string(simd::detected_isa()));
  for (std::size_t n = 0; n < 140; ++n) {
    const auto a = random_floats(n, rng), b = random_floats(n, rng);
    const auto x = random_doubles(n, rng), y = random_doubles(n, rng);
    const double l2 = simd::scalar::squared_l2(a.data(), b.data(), n);
    const double dot = simd::scalar::dot(x.data(), y.data(), n);
    auto ref = y;
    simd::scalar::axpy(-1.25, x.data(), ref.data(), n);
    for (const simd::Isa isa : isas) {
      double got_l2 = 0, got_dot = 0;
      auto got = y;
      if (isa == simd::Isa::avx2) {
        got_l2 = simd::avx2::squared_l2(a.data(), b.data(), n);
        got_dot = simd::avx2::dot(x.data(), y.data(), n);
        simd::avx2::axpy(-1.25, x.data(), got.data(), n);
      } else {
        got_l2 = simd::neon::squared_l2(a.data(), b.data(), n);
        got_dot = simd::neon::dot(x.data(), y.data(), n);
        simd::neon::axpy(-1.25, x.data(), got.data(), n);
      }
      CHECK(got_l2 == l2);
      CHECK(got_dot == dot);
      CHECK(got == ref);
    }
  }
}

TEST_CASE("dispatch selects an available ISA and falls back to scalar") {
  IsaGuard guard;
  CHECK(simd::isa_available(simd::Isa::scalar));
  CHECK(simd::isa_available(simd::detected_isa()));
  CHECK(simd::set_active_isa(simd::Isa::scalar) == simd::Isa::scalar);
  CHECK(simd::active_isa() == simd::Isa::scalar);
  for (const simd::Isa isa : {simd::Isa::avx2, simd::Isa::neon}) {
    const simd::Isa got = simd::set_active_isa(isa);
    CHECK(got == (simd::isa_available(isa) ? isa : simd::Isa::scalar));
  }
}

TEST_CASE("dispatched entry points give the same bits under every ISA") {
  IsaGuard guard;
  SplitMix64 rng(23);
  const std::size_t dim = 128, rows = 37;
  const auto q = random_floats(dim, rng), table = random_floats(dim * rows, rng);
  simd::set_active_isa(simd::Isa::scalar);
  std::vector<double> ref(rows);
  simd::squared_l2_rows(q, table, dim, ref);
  for (std::size_t r = 0; r < rows; ++r) {
    CHECK(ref[r] == simd::squared_l2(q, std::span<const float>(table).subspan(r * dim, dim)));
  }
  for (const simd::Isa isa : vector_isas()) {
    simd::set_active_isa(isa);
    std::vector<double> got(rows);
    simd::squared_l2_rows(q, table, dim, got);
    CHECK(got == ref);
  }
}
