#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops (descriptor distances, MLP dot products).
//
// Every ISA variant accumulates in the same 4 x f64 lane layout and reduces
// with the same tree, and the scalar reference emulates that layout. Results
// are therefore bit-identical whichever path the dispatcher picks, which
// keeps retrieval rankings and training runs reproducible across machines.

namespace vl::simd {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

/// Best ISA supported by both the build and the running CPU.
Isa detected_isa();

/// ISA currently used by the dispatching entry points.
Isa active_isa();

/// Overrides dispatch (tests / benchmarking). Requesting an ISA that is not
/// available falls back to scalar; returns the ISA actually selected.
Isa set_active_isa(Isa isa);

bool isa_available(Isa isa);

// Dispatching entry points. Spans must have equal length.

/// Squared Euclidean distance of f32 vectors accumulated in f64 (each
/// difference and square is exact, so only the summation rounds).
double squared_l2(std::span<const float> a, std::span<const float> b);
double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// out[r] = squared_l2(query, rows[r*dim .. r*dim+dim)).
void squared_l2_rows(std::span<const float> query, std::span<const float> rows, std::size_t dim,
                     std::span<double> out);

namespace scalar {
double squared_l2(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double squared_l2(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double squared_l2(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

}  // namespace vl::simd
