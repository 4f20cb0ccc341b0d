#include "vl/simd/kernels.h"

namespace vl::simd::scalar {

// Lane emulation: acc[l] sums the terms i with i % 4 == l over the full
// 4-wide blocks, lanes collapse as (0+2, 1+3) then t0 + t1, and the tail is
// added sequentially. This is exactly what the vector paths do.

namespace {

double reduce4(const double acc[4]) {
  const double t0 = acc[0] + acc[2];
  const double t1 = acc[1] + acc[3];
  return t0 + t1;
}

}  // namespace

double squared_l2(const float* a, const float* b, std::size_t n) {
  double acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) {
      const double d = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      acc[l] = acc[l] + d * d;
    }
  }
  double r = reduce4(acc);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    r = r + d * d;
  }
  return r;
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) acc[l] = acc[l] + a[i + l] * b[i + l];
  }
  double r = reduce4(acc);
  for (; i < n; ++i) r = r + a[i] * b[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace vl::simd::scalar
