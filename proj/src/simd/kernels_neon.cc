#include <arm_neon.h>

#include "vl/simd/kernels.h"

// Two float64x2 registers hold lanes (0,1) and (2,3) of the 4-lane f64
// layout; vmulq + vaddq (never vfmaq) keeps the roundings identical to the
// scalar reference.

namespace vl::simd::neon {

namespace {

inline double reduce4(float64x2_t lo, float64x2_t hi) {
  const float64x2_t t = vaddq_f64(lo, hi);  // a0+a2, a1+a3
  return vgetq_lane_f64(t, 0) + vgetq_lane_f64(t, 1);
}

}  // namespace

double squared_l2(const float* a, const float* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0), hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t fa = vld1q_f32(a + i);
    const float32x4_t fb = vld1q_f32(b + i);
    const float64x2_t d0 = vsubq_f64(vcvt_f64_f32(vget_low_f32(fa)), vcvt_f64_f32(vget_low_f32(fb)));
    const float64x2_t d1 = vsubq_f64(vcvt_high_f64_f32(fa), vcvt_high_f64_f32(fb));
    lo = vaddq_f64(lo, vmulq_f64(d0, d0));
    hi = vaddq_f64(hi, vmulq_f64(d1, d1));
  }
  double r = reduce4(lo, hi);
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    r = r + d * d;
  }
  return r;
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0), hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double r = reduce4(lo, hi);
  for (; i < n; ++i) r = r + a[i] * b[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

}  // namespace vl::simd::neon
