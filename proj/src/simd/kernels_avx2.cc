#include <immintrin.h>

#include "vl/simd/kernels.h"

// Compiled with -mavx2 only (no -mfma): mul and add stay separate roundings
// so results match the scalar lane emulation bit for bit.

namespace vl::simd::avx2 {

namespace {

inline double reduce4(__m256d acc) {
  const __m128d lo = _mm256_castpd256_pd128(acc);    // a0 a1
  const __m128d hi = _mm256_extractf128_pd(acc, 1);  // a2 a3
  const __m128d t = _mm_add_pd(lo, hi);              // a0+a2, a1+a3
  const __m128d r = _mm_add_sd(t, _mm_unpackhi_pd(t, t));
  return _mm_cvtsd_f64(r);
}

}  // namespace

double squared_l2(const float* a, const float* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d vb = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    const __m256d d = _mm256_sub_pd(va, vb);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double r = reduce4(acc);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    r = r + d * d;
  }
  return r;
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double r = reduce4(acc);
  for (; i < n; ++i) r = r + a[i] * b[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace vl::simd::avx2
