#include <atomic>
#include <cassert>

#include "vl/simd/kernels.h"

namespace vl::simd {

#if !defined(VL_HAVE_AVX2)
namespace avx2 {
double squared_l2(const float* a, const float* b, std::size_t n) { return scalar::squared_l2(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
}  // namespace avx2
#endif

#if !defined(VL_HAVE_NEON)
namespace neon {
double squared_l2(const float* a, const float* b, std::size_t n) { return scalar::squared_l2(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
}  // namespace neon
#endif

namespace {

struct KernelTable {
  double (*squared_l2_f32)(const float*, const float*, std::size_t);
  double (*dot_f64)(const double*, const double*, std::size_t);
  void (*axpy_f64)(double, const double*, double*, std::size_t);
};

constexpr KernelTable kScalar{scalar::squared_l2, scalar::dot, scalar::axpy};
constexpr KernelTable kAvx2{avx2::squared_l2, avx2::dot, avx2::axpy};
constexpr KernelTable kNeon{neon::squared_l2, neon::dot, neon::axpy};

const KernelTable& table_for(Isa isa) {
  switch (isa) {
    case Isa::avx2: return kAvx2;
    case Isa::neon: return kNeon;
    case Isa::scalar: break;
  }
  return kScalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(VL_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(VL_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() {
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

Isa set_active_isa(Isa isa) {
  const Isa chosen = isa_available(isa) ? isa : Isa::scalar;
  active().store(chosen, std::memory_order_relaxed);
  return chosen;
}

double squared_l2(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return table_for(active_isa()).squared_l2_f32(a.data(), b.data(), a.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return table_for(active_isa()).dot_f64(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  table_for(active_isa()).axpy_f64(alpha, x.data(), y.data(), x.size());
}

void squared_l2_rows(std::span<const float> query, std::span<const float> rows, std::size_t dim,
                     std::span<double> out) {
  assert(query.size() == dim && rows.size() == out.size() * dim);
  const auto kernel = table_for(active_isa()).squared_l2_f32;
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = kernel(query.data(), rows.data() + r * dim, dim);
}

}  // namespace vl::simd
